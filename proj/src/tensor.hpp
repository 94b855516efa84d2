#pragma once

#include <vector>

#include "errors.hpp"

namespace convflat {

/// Geometry of the final conv -> GAP block. Immutable after validation.
struct ConvSpec {
    int c_in = 1;
    int c_out = 1;
    int k_h = 1;
    int k_w = 1;
    int stride = 1;
    int padding = 0;
    int h = 1;
    int w = 1;

    int out_h() const { return (h + 2 * padding - k_h) / stride + 1; }
    int out_w() const { return (w + 2 * padding - k_w) / stride + 1; }
    int patch_count() const { return out_h() * out_w(); } // R
    int patch_dim() const { return k_h * k_w; }           // d_c
    int flat_dim() const { return c_in * patch_dim(); }   // d

    // throws geometry_error on non-positive dims or empty output
    void validate() const;
};

/// Dense channel-height-width tensor, row-major, 64-bit values.
class Tensor3 {
public:
    Tensor3(int channels, int height, int width);
    Tensor3(int channels, int height, int width, std::vector<double> data);

    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }

    double at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }
    double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

private:
    int c_, h_, w_;
    std::vector<double> data_;
};

/// Sliding-window patches of one input, kept separate per channel.
/// Row r of channel s is the window at flattened spatial position r,
/// vectorized row-by-row; padded positions read as zero.
struct PatchMatrix {
    int c_in = 0;
    int rows = 0;      // R = out_h * out_w, identical across channels
    int patch_dim = 0; // d_c = k_h * k_w

    // layout: [channel][row][component]
    std::vector<double> values;

    const double* patch(int channel, int row) const {
        return values.data() + (static_cast<std::size_t>(channel) * rows + row) * patch_dim;
    }
};

/// Channel-wise average patch of one sample and its squared norms.
struct PatchSummary {
    int c_in = 0;
    int patch_dim = 0;

    std::vector<double> avg;              // concatenated channel averages, length c_in * patch_dim
    std::vector<double> channel_sq_norms; // per channel
    double sq_norm = 0.0;                 // sum over channels

    int flat_dim() const { return c_in * patch_dim; }
    const double* channel(int s) const { return avg.data() + static_cast<std::size_t>(s) * patch_dim; }
};

PatchMatrix extract_patches(const Tensor3& x, const ConvSpec& spec);

PatchSummary average_patch(const PatchMatrix& p);

/// Column means of a row-major rows x c_out matrix of conv outputs.
std::vector<double> global_average_pool(const std::vector<double>& z, int rows, int c_out);

} // namespace convflat
