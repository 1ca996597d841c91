#pragma once

// Convolution shape arithmetic and the blocked tensor layouts the
// kernels run on.
//
// Layouts (all 32-bit float, innermost run contiguous):
//
//   ActNCHWc    [N][C/V][H][W][V]          activations and gradients for
//                                          FWD / BWI; lane = channel % V
//   FilterKCRSblk [K/V][C/V][S][R][Vc][Vk] filters and filter gradients;
//                                          innermost is a K vector, then
//                                          the C lane, then filter width
//   ActCHWNn    [ceil(N/V)][C][H][W][V]    minibatch-innermost input for
//                                          BWW; ragged tail lanes are
//                                          zero-filled
//
// Zero padding is virtual: shapes carry pad sizes and all index math
// clips against the real image bounds, so padded zeros are never stored.

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "spconv/common.hpp"

namespace spconv {

struct conv_shape {
    int N = 0;           // minibatch
    int C = 0, K = 0;    // input / output channels
    int H = 0, W = 0;    // input rows / columns
    int R = 0, S = 0;    // filter width / height
    int O = 1, P = 1;    // horizontal / vertical stride
    int padW = 0, padH = 0;

    // Default padding: same-padding for odd filters, none for 1x1.
    static conv_shape make(int N, int C, int K, int H, int W, int R, int S,
                           int O = 1, int P = 1);
    static conv_shape make_padded(int N, int C, int K, int H, int W, int R,
                                  int S, int O, int P, int padW, int padH);

    int out_w() const { return (W + 2 * padW - R) / O + 1; }
    int out_h() const { return (H + 2 * padH - S) / P + 1; }

    void validate() const; // throws spconv::error on a bad shape
};

// (W', H'); validates the shape first.
std::pair<int, int> output_shape(const conv_shape& shape);

// All (filter column u, output column x') pairs one input column x feeds,
// ordered by descending u (ascending x'). Empty when the stride skips x.
std::vector<std::pair<int, int>> affected_outputs(const conv_shape& shape,
                                                  int x);

// The mirror image for BWI-style sweeps: (u, output column x) pairs fed
// by one gradient column x', ascending u (ascending x).
std::vector<std::pair<int, int>> bwi_affected_outputs(const conv_shape& shape,
                                                      int xp);

// Canonical row-major interchange form; all oracles operate on this.
// For filters the dims read (K, C, S, R) and at() takes (k, c, v, u).
struct plain_tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    plain_tensor() = default;
    plain_tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(std::size_t(n_) * c_ * h_ * w_, 0.0f) {}

    std::size_t size() const { return data.size(); }

    std::size_t index(int i, int ch, int y, int x) const {
        return ((std::size_t(i) * c + ch) * h + y) * w + x;
    }
    float& at(int i, int ch, int y, int x) { return data[index(i, ch, y, x)]; }
    float at(int i, int ch, int y, int x) const {
        return data[index(i, ch, y, x)];
    }
};

enum class tensor_layout { plain, act_nchwc, filter_kcrs_blk, act_chwnn };

const char* layout_name(tensor_layout l);

struct blocked_tensor {
    tensor_layout layout = tensor_layout::act_nchwc;
    int V = 0;
    // Activation flavors use n/c/h/w (logical, unpadded); the filter
    // flavor uses k/c/s/r.
    int n = 0, c = 0, h = 0, w = 0;
    int k = 0, r = 0, s = 0;
    std::vector<float> data;

    int c_blocks() const { return c / V; }
    int k_blocks() const { return k / V; }
    int n_blocks() const { return (n + V - 1) / V; } // act_chwnn only

    // ActNCHWc: element (i, ch, y, x)
    std::size_t act_index(int i, int ch, int y, int x) const {
        return (((std::size_t(i) * c_blocks() + ch / V) * h + y) * w + x) * V
               + ch % V;
    }
    // ActCHWNn: element (i, ch, y, x)
    std::size_t chwnn_index(int i, int ch, int y, int x) const {
        return (((std::size_t(i / V) * c + ch) * h + y) * w + x) * V + i % V;
    }
    // FilterKCRSblk: element (k, c, u, v); u = filter column, v = row
    std::size_t filter_index(int kk, int cc, int u, int v) const {
        return ((((std::size_t(kk / V) * c_blocks() + cc / V) * s + v) * r + u)
                    * V
                + cc % V)
                   * V
               + kk % V;
    }
};

// Pack / unpack between plain row-major and the blocked forms. The
// round trip is bitwise identity (tail lanes of act_chwnn excepted,
// which unpack drops).
blocked_tensor pack_act_nchwc(const plain_tensor& t, int V);
blocked_tensor pack_act_chwnn(const plain_tensor& t, int V);
// swap_kc packs the transposed filter BWI wants: entry (c, k, u, v) of
// the source lands where (k', c') = (c, k) would.
blocked_tensor pack_filter(const plain_tensor& g, int V,
                           bool swap_kc = false);
plain_tensor unpack(const blocked_tensor& b);

// Flat little-endian float32 file with a 64-byte textual header.
void save_tensor(const std::filesystem::path& path, const plain_tensor& t);
void save_tensor(const std::filesystem::path& path, const blocked_tensor& t);
bool load_is_plain(const std::filesystem::path& path);
plain_tensor load_plain_tensor(const std::filesystem::path& path);
blocked_tensor load_blocked_tensor(const std::filesystem::path& path);

} // namespace spconv
