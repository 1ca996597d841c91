#include "spconv/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "spconv/vec.hpp"

namespace spconv {

conv_shape conv_shape::make(int N, int C, int K, int H, int W, int R, int S,
                            int O, int P) {
    return make_padded(N, C, K, H, W, R, S, O, P, (R - 1) / 2, (S - 1) / 2);
}

conv_shape conv_shape::make_padded(int N, int C, int K, int H, int W, int R,
                                   int S, int O, int P, int padW, int padH) {
    conv_shape sh;
    sh.N = N; sh.C = C; sh.K = K;
    sh.H = H; sh.W = W; sh.R = R; sh.S = S;
    sh.O = O; sh.P = P; sh.padW = padW; sh.padH = padH;
    sh.validate();
    return sh;
}

void conv_shape::validate() const {
    SPCONV_REQUIRE(N > 0 && C > 0 && K > 0 && H > 0 && W > 0 && R > 0 && S > 0,
                   "conv_shape: all dimensions must be positive");
    SPCONV_REQUIRE(O >= 1 && P >= 1, "conv_shape: strides must be >= 1");
    SPCONV_REQUIRE(padW >= 0 && padH >= 0 && padW < R && padH < S,
                   "conv_shape: padding must satisfy 0 <= pad < filter size");
    SPCONV_REQUIRE(W + 2 * padW >= R && H + 2 * padH >= S,
                   "conv_shape: filter does not fit the padded image");
    SPCONV_REQUIRE(out_w() >= 1 && out_h() >= 1,
                   "conv_shape: output size must be positive");
}

std::pair<int, int> output_shape(const conv_shape& shape) {
    shape.validate();
    return {shape.out_w(), shape.out_h()};
}

std::vector<std::pair<int, int>> affected_outputs(const conv_shape& shape,
                                                  int x) {
    std::vector<std::pair<int, int>> out;
    out.reserve((shape.R + shape.O - 1) / shape.O);
    const int wp = shape.out_w();
    for (int u = shape.R - 1; u >= 0; --u) {
        const int num = x + shape.padW - u;
        if (num < 0 || num % shape.O != 0) continue;
        const int xp = num / shape.O;
        if (xp < wp) out.emplace_back(u, xp);
    }
    return out;
}

std::vector<std::pair<int, int>> bwi_affected_outputs(const conv_shape& shape,
                                                      int xp) {
    std::vector<std::pair<int, int>> out;
    out.reserve(shape.R);
    for (int u = 0; u < shape.R; ++u) {
        const int x = xp * shape.O + u - shape.padW;
        if (x >= 0 && x < shape.W) out.emplace_back(u, x);
    }
    return out;
}

const char* layout_name(tensor_layout l) {
    switch (l) {
    case tensor_layout::plain: return "Plain";
    case tensor_layout::act_nchwc: return "ActNCHWc";
    case tensor_layout::filter_kcrs_blk: return "FilterKCRSblk";
    case tensor_layout::act_chwnn: return "ActCHWNn";
    }
    return "?";
}

blocked_tensor pack_act_nchwc(const plain_tensor& t, int V) {
    SPCONV_REQUIRE(valid_vector_width(V), "pack: V must be 4, 8 or 16");
    SPCONV_REQUIRE(t.c % V == 0, "pack_act_nchwc: channels not divisible by V");
    blocked_tensor b;
    b.layout = tensor_layout::act_nchwc;
    b.V = V;
    b.n = t.n; b.c = t.c; b.h = t.h; b.w = t.w;
    b.data.assign(t.size(), 0.0f);
    for (int i = 0; i < t.n; ++i)
        for (int ch = 0; ch < t.c; ++ch)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x)
                    b.data[b.act_index(i, ch, y, x)] = t.at(i, ch, y, x);
    return b;
}

blocked_tensor pack_act_chwnn(const plain_tensor& t, int V) {
    SPCONV_REQUIRE(valid_vector_width(V), "pack: V must be 4, 8 or 16");
    blocked_tensor b;
    b.layout = tensor_layout::act_chwnn;
    b.V = V;
    b.n = t.n; b.c = t.c; b.h = t.h; b.w = t.w;
    const int nb = (t.n + V - 1) / V;
    b.data.assign(std::size_t(nb) * t.c * t.h * t.w * V, 0.0f);
    for (int i = 0; i < t.n; ++i)
        for (int ch = 0; ch < t.c; ++ch)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x)
                    b.data[b.chwnn_index(i, ch, y, x)] = t.at(i, ch, y, x);
    return b;
}

blocked_tensor pack_filter(const plain_tensor& g, int V, bool swap_kc) {
    SPCONV_REQUIRE(valid_vector_width(V), "pack: V must be 4, 8 or 16");
    const int K = swap_kc ? g.c : g.n;
    const int C = swap_kc ? g.n : g.c;
    SPCONV_REQUIRE(K % V == 0 && C % V == 0,
                   "pack_filter: K and C must be divisible by V");
    blocked_tensor b;
    b.layout = tensor_layout::filter_kcrs_blk;
    b.V = V;
    b.k = K; b.c = C; b.s = g.h; b.r = g.w;
    b.data.assign(g.size(), 0.0f);
    for (int kk = 0; kk < g.n; ++kk)
        for (int cc = 0; cc < g.c; ++cc)
            for (int v = 0; v < g.h; ++v)
                for (int u = 0; u < g.w; ++u) {
                    const int dk = swap_kc ? cc : kk;
                    const int dc = swap_kc ? kk : cc;
                    b.data[b.filter_index(dk, dc, u, v)] = g.at(kk, cc, v, u);
                }
    return b;
}

plain_tensor unpack(const blocked_tensor& b) {
    switch (b.layout) {
    case tensor_layout::act_nchwc: {
        plain_tensor t(b.n, b.c, b.h, b.w);
        for (int i = 0; i < b.n; ++i)
            for (int ch = 0; ch < b.c; ++ch)
                for (int y = 0; y < b.h; ++y)
                    for (int x = 0; x < b.w; ++x)
                        t.at(i, ch, y, x) = b.data[b.act_index(i, ch, y, x)];
        return t;
    }
    case tensor_layout::act_chwnn: {
        plain_tensor t(b.n, b.c, b.h, b.w);
        for (int i = 0; i < b.n; ++i)
            for (int ch = 0; ch < b.c; ++ch)
                for (int y = 0; y < b.h; ++y)
                    for (int x = 0; x < b.w; ++x)
                        t.at(i, ch, y, x) = b.data[b.chwnn_index(i, ch, y, x)];
        return t;
    }
    case tensor_layout::filter_kcrs_blk: {
        plain_tensor t(b.k, b.c, b.s, b.r);
        for (int kk = 0; kk < b.k; ++kk)
            for (int cc = 0; cc < b.c; ++cc)
                for (int v = 0; v < b.s; ++v)
                    for (int u = 0; u < b.r; ++u)
                        t.at(kk, cc, v, u) =
                            b.data[b.filter_index(kk, cc, u, v)];
        return t;
    }
    case tensor_layout::plain: break;
    }
    throw error("unpack: unsupported layout");
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need a swap");

constexpr std::size_t header_bytes = 64;
constexpr const char* file_tag = "SPCV1";

void write_file(const std::filesystem::path& path, const std::string& header,
                const float* data, std::size_t count) {
    SPCONV_REQUIRE(header.size() < header_bytes, "tensor header overflow");
    char hdr[header_bytes];
    std::memset(hdr, ' ', header_bytes);
    std::memcpy(hdr, header.data(), header.size());
    hdr[header_bytes - 1] = '\n';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    SPCONV_REQUIRE(out.good(), "cannot open tensor file for writing: "
                                   + path.string());
    out.write(hdr, header_bytes);
    out.write(reinterpret_cast<const char*>(data),
              std::streamsize(count * sizeof(float)));
    SPCONV_REQUIRE(out.good(), "tensor write failed: " + path.string());
}

struct parsed_header {
    std::string layout;
    int V = 0;
    int d0 = 0, d1 = 0, d2 = 0, d3 = 0;
};

parsed_header read_header(std::ifstream& in, const std::string& what) {
    char hdr[header_bytes + 1] = {};
    in.read(hdr, header_bytes);
    SPCONV_REQUIRE(in.gcount() == std::streamsize(header_bytes),
                   "tensor file too short: " + what);
    std::string tag, layout;
    parsed_header p;
    {
        std::string s(hdr, header_bytes);
        std::size_t pos = 0;
        auto token = [&]() {
            while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\n')) ++pos;
            std::size_t start = pos;
            while (pos < s.size() && s[pos] != ' ' && s[pos] != '\n') ++pos;
            return s.substr(start, pos - start);
        };
        tag = token();
        p.layout = token();
        try {
            p.V = std::stoi(token());
            p.d0 = std::stoi(token());
            p.d1 = std::stoi(token());
            p.d2 = std::stoi(token());
            p.d3 = std::stoi(token());
        } catch (const std::exception&) {
            throw error("malformed tensor header: " + what);
        }
    }
    SPCONV_REQUIRE(tag == file_tag, "not a tensor file (bad tag): " + what);
    return p;
}

std::vector<float> read_payload(std::ifstream& in, std::size_t count,
                                const std::string& what) {
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            std::streamsize(count * sizeof(float)));
    SPCONV_REQUIRE(in.gcount() == std::streamsize(count * sizeof(float)),
                   "tensor payload truncated: " + what);
    return data;
}

} // namespace

void save_tensor(const std::filesystem::path& path, const plain_tensor& t) {
    std::string header = std::string(file_tag) + " Plain 0 "
                         + std::to_string(t.n) + " " + std::to_string(t.c)
                         + " " + std::to_string(t.h) + " "
                         + std::to_string(t.w);
    write_file(path, header, t.data.data(), t.size());
}

void save_tensor(const std::filesystem::path& path, const blocked_tensor& t) {
    const bool filt = t.layout == tensor_layout::filter_kcrs_blk;
    std::string header = std::string(file_tag) + " " + layout_name(t.layout)
                         + " " + std::to_string(t.V) + " "
                         + std::to_string(filt ? t.k : t.n) + " "
                         + std::to_string(t.c) + " "
                         + std::to_string(filt ? t.s : t.h) + " "
                         + std::to_string(filt ? t.r : t.w);
    write_file(path, header, t.data.data(), t.data.size());
}

bool load_is_plain(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    SPCONV_REQUIRE(in.good(), "cannot open tensor file: " + path.string());
    return read_header(in, path.string()).layout == "Plain";
}

plain_tensor load_plain_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    SPCONV_REQUIRE(in.good(), "cannot open tensor file: " + path.string());
    parsed_header p = read_header(in, path.string());
    SPCONV_REQUIRE(p.layout == "Plain",
                   "expected a Plain tensor: " + path.string());
    plain_tensor t(p.d0, p.d1, p.d2, p.d3);
    t.data = read_payload(in, t.size(), path.string());
    return t;
}

blocked_tensor load_blocked_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    SPCONV_REQUIRE(in.good(), "cannot open tensor file: " + path.string());
    parsed_header p = read_header(in, path.string());
    blocked_tensor b;
    b.V = p.V;
    SPCONV_REQUIRE(valid_vector_width(b.V),
                   "bad vector width in tensor header: " + path.string());
    std::size_t total = 0;
    if (p.layout == "ActNCHWc") {
        b.layout = tensor_layout::act_nchwc;
        b.n = p.d0; b.c = p.d1; b.h = p.d2; b.w = p.d3;
        SPCONV_REQUIRE(b.c % b.V == 0, "bad dims in tensor header");
        total = std::size_t(b.n) * b.c * b.h * b.w;
    } else if (p.layout == "ActCHWNn") {
        b.layout = tensor_layout::act_chwnn;
        b.n = p.d0; b.c = p.d1; b.h = p.d2; b.w = p.d3;
        total = std::size_t(b.n_blocks()) * b.c * b.h * b.w * b.V;
    } else if (p.layout == "FilterKCRSblk") {
        b.layout = tensor_layout::filter_kcrs_blk;
        b.k = p.d0; b.c = p.d1; b.s = p.d2; b.r = p.d3;
        SPCONV_REQUIRE(b.k % b.V == 0 && b.c % b.V == 0,
                       "bad dims in tensor header");
        total = std::size_t(b.k) * b.c * b.s * b.r;
    } else {
        throw error("unknown layout in tensor header: " + p.layout);
    }
    b.data = read_payload(in, total, path.string());
    return b;
}

} // namespace spconv
