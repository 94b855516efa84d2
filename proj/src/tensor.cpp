#include "tensor.hpp"

#include <cmath>
#include <string>

namespace convflat {

void ConvSpec::validate() const {
    if (c_in < 1 || c_out < 1 || k_h < 1 || k_w < 1 || h < 1 || w < 1)
        throw geometry_error("conv spec: channel, kernel and input extents must be positive");
    if (stride < 1) throw geometry_error("conv spec: stride must be positive");
    if (padding < 0) throw geometry_error("conv spec: padding must be non-negative");
    if (k_h > h + 2 * padding || k_w > w + 2 * padding)
        throw geometry_error("conv spec: kernel larger than padded input");
    if (out_h() < 1 || out_w() < 1)
        throw geometry_error("conv spec: empty output map");
}

Tensor3::Tensor3(int channels, int height, int width)
    : c_(channels), h_(height), w_(width),
      data_(static_cast<std::size_t>(channels) * height * width, 0.0) {
    if (channels < 1 || height < 1 || width < 1)
        throw geometry_error("tensor: extents must be positive");
}

Tensor3::Tensor3(int channels, int height, int width, std::vector<double> data)
    : c_(channels), h_(height), w_(width), data_(std::move(data)) {
    if (channels < 1 || height < 1 || width < 1)
        throw geometry_error("tensor: extents must be positive");
    if (data_.size() != static_cast<std::size_t>(c_) * h_ * w_)
        throw geometry_error("tensor: data length " + std::to_string(data_.size()) +
                             " does not match extents");
    for (double v : data_)
        if (!std::isfinite(v)) throw validation_error("tensor: non-finite value");
}

PatchMatrix extract_patches(const Tensor3& x, const ConvSpec& spec) {
    spec.validate();
    if (x.channels() != spec.c_in || x.height() != spec.h || x.width() != spec.w)
        throw geometry_error("extract_patches: input dims do not match spec");

    PatchMatrix p;
    p.c_in = spec.c_in;
    p.rows = spec.patch_count();
    p.patch_dim = spec.patch_dim();
    p.values.assign(static_cast<std::size_t>(p.c_in) * p.rows * p.patch_dim, 0.0);

    const int oh = spec.out_h(), ow = spec.out_w();
    double* out = p.values.data();
    for (int s = 0; s < spec.c_in; ++s) {
        for (int py = 0; py < oh; ++py) {
            for (int px = 0; px < ow; ++px) {
                const int y0 = py * spec.stride - spec.padding;
                const int x0 = px * spec.stride - spec.padding;
                for (int ky = 0; ky < spec.k_h; ++ky) {
                    const int y = y0 + ky;
                    for (int kx = 0; kx < spec.k_w; ++kx) {
                        const int xx = x0 + kx;
                        const bool inside = y >= 0 && y < spec.h && xx >= 0 && xx < spec.w;
                        *out++ = inside ? x.at(s, y, xx) : 0.0;
                    }
                }
            }
        }
    }
    return p;
}

PatchSummary average_patch(const PatchMatrix& p) {
    if (p.rows < 1 || p.c_in < 1) throw validation_error("average_patch: empty patch matrix");

    PatchSummary s;
    s.c_in = p.c_in;
    s.patch_dim = p.patch_dim;
    s.avg.assign(static_cast<std::size_t>(p.c_in) * p.patch_dim, 0.0);
    s.channel_sq_norms.assign(p.c_in, 0.0);

    const double inv_rows = 1.0 / p.rows;
    for (int c = 0; c < p.c_in; ++c) {
        double* avg = s.avg.data() + static_cast<std::size_t>(c) * p.patch_dim;
        for (int r = 0; r < p.rows; ++r) {
            const double* row = p.patch(c, r);
            for (int i = 0; i < p.patch_dim; ++i) avg[i] += row[i];
        }
        double sq = 0.0;
        for (int i = 0; i < p.patch_dim; ++i) {
            avg[i] *= inv_rows;
            sq += avg[i] * avg[i];
        }
        s.channel_sq_norms[c] = sq;
        s.sq_norm += sq;
    }
    return s;
}

std::vector<double> global_average_pool(const std::vector<double>& z, int rows, int c_out) {
    if (rows < 1 || c_out < 1) throw validation_error("global_average_pool: empty map");
    if (z.size() != static_cast<std::size_t>(rows) * c_out)
        throw validation_error("global_average_pool: size mismatch");

    std::vector<double> pooled(c_out, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c_out; ++j) pooled[j] += z[static_cast<std::size_t>(r) * c_out + j];
    const double inv = 1.0 / rows;
    for (double& v : pooled) v *= inv;
    return pooled;
}

} // namespace convflat
