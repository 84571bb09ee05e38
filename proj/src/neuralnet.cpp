#include "cclab/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "cclab/rng.hpp"

namespace cclab::nn {

using nlohmann::json;

// ---- architecture specs ----------------------------------------------------

namespace {

const char* kind_name(LayerDesc::Kind k) {
    switch (k) {
        case LayerDesc::Kind::conv: return "conv";
        case LayerDesc::Kind::relu: return "relu";
        case LayerDesc::Kind::maxpool2: return "maxpool2";
        case LayerDesc::Kind::dense: return "dense";
        case LayerDesc::Kind::dropout: return "dropout";
        case LayerDesc::Kind::bottleneck: return "bottleneck";
        case LayerDesc::Kind::global_avg_pool: return "global_avg_pool";
    }
    throw std::logic_error("bad layer kind");
}

LayerDesc::Kind kind_from_name(const std::string& s) {
    for (auto k : {LayerDesc::Kind::conv, LayerDesc::Kind::relu, LayerDesc::Kind::maxpool2,
                   LayerDesc::Kind::dense, LayerDesc::Kind::dropout, LayerDesc::Kind::bottleneck,
                   LayerDesc::Kind::global_avg_pool})
        if (s == kind_name(k)) return k;
    throw std::invalid_argument("unknown layer kind: " + s);
}

}  // namespace

std::string ArchitectureSpec::to_json() const {
    json j;
    j["name"] = name;
    j["num_classes"] = num_classes;
    json ls = json::array();
    for (const auto& l : layers) {
        json jl;
        jl["kind"] = kind_name(l.kind);
        if (l.out_channels) jl["out_channels"] = l.out_channels;
        if (l.kernel) jl["kernel"] = l.kernel;
        if (l.stride != 1) jl["stride"] = l.stride;
        if (l.pad) jl["pad"] = l.pad;
        if (l.p != 0.0) jl["p"] = l.p;
        if (l.mid_channels) jl["mid_channels"] = l.mid_channels;
        if (!l.tap.empty()) jl["tap"] = l.tap;
        ls.push_back(std::move(jl));
    }
    j["layers"] = std::move(ls);
    return j.dump();
}

ArchitectureSpec ArchitectureSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    ArchitectureSpec a;
    a.name = j.at("name").get<std::string>();
    a.num_classes = j.at("num_classes").get<int>();
    for (const auto& jl : j.at("layers")) {
        LayerDesc l;
        l.kind = kind_from_name(jl.at("kind").get<std::string>());
        l.out_channels = jl.value("out_channels", 0);
        l.kernel = jl.value("kernel", 0);
        l.stride = jl.value("stride", 1);
        l.pad = jl.value("pad", 0);
        l.p = jl.value("p", 0.0);
        l.mid_channels = jl.value("mid_channels", 0);
        l.tap = jl.value("tap", std::string{});
        a.layers.push_back(std::move(l));
    }
    return a;
}

ArchitectureSpec deepcc_arch(int num_classes) {
    ArchitectureSpec a;
    a.name = "deepcc";
    a.num_classes = num_classes;
    auto conv = [](int out, int k) {
        LayerDesc l;
        l.kind = LayerDesc::Kind::conv;
        l.out_channels = out;
        l.kernel = k;
        return l;
    };
    auto simple = [](LayerDesc::Kind k, double p = 0.0, std::string tap = {}) {
        LayerDesc l;
        l.kind = k;
        l.p = p;
        l.tap = std::move(tap);
        return l;
    };
    auto dense = [](int out, std::string tap = {}) {
        LayerDesc l;
        l.kind = LayerDesc::Kind::dense;
        l.out_channels = out;
        l.tap = std::move(tap);
        return l;
    };
    a.layers = {
        conv(16, 5), simple(LayerDesc::Kind::relu),
        simple(LayerDesc::Kind::maxpool2, 0.0, "C1"),
        conv(32, 3), simple(LayerDesc::Kind::relu),
        simple(LayerDesc::Kind::maxpool2, 0.0, "C2"),
        conv(64, 3), simple(LayerDesc::Kind::relu),
        simple(LayerDesc::Kind::maxpool2, 0.0, "C3"),
        dense(250), simple(LayerDesc::Kind::relu, 0.0, "F1"),
        dense(250), simple(LayerDesc::Kind::relu, 0.0, "F2"),
        simple(LayerDesc::Kind::dropout, 0.4),
        dense(num_classes),
    };
    return a;
}

ArchitectureSpec rescc_arch(int num_classes) {
    ArchitectureSpec a;
    a.name = "rescc";
    a.num_classes = num_classes;
    auto bneck = [](int mid, int out, int stride, std::string tap = {}) {
        LayerDesc l;
        l.kind = LayerDesc::Kind::bottleneck;
        l.mid_channels = mid;
        l.out_channels = out;
        l.stride = stride;
        l.tap = std::move(tap);
        return l;
    };
    LayerDesc stem;
    stem.kind = LayerDesc::Kind::conv;
    stem.out_channels = 16;
    stem.kernel = 5;
    LayerDesc relu;
    relu.kind = LayerDesc::Kind::relu;
    LayerDesc pool;
    pool.kind = LayerDesc::Kind::maxpool2;
    LayerDesc gap;
    gap.kind = LayerDesc::Kind::global_avg_pool;
    LayerDesc drop;
    drop.kind = LayerDesc::Kind::dropout;
    drop.p = 0.4;
    LayerDesc head;
    head.kind = LayerDesc::Kind::dense;
    head.out_channels = num_classes;

    a.layers = {stem, relu, pool,
                // stage 1: 3 blocks at width 16
                bneck(16, 32, 2), bneck(16, 32, 1), bneck(16, 32, 1, "S1"),
                // stage 2: 1 block at width 32
                bneck(32, 64, 2, "S2"),
                // stage 3: 2 blocks at width 64
                bneck(64, 128, 2), bneck(64, 128, 1, "S3"),
                gap, drop, head};
    return a;
}

ArchitectureSpec linear_probe_arch(int num_classes) {
    ArchitectureSpec a;
    a.name = "linear_probe";
    a.num_classes = num_classes;
    LayerDesc head;
    head.kind = LayerDesc::Kind::dense;
    head.out_channels = num_classes;
    a.layers = {head};
    return a;
}

// ---- network construction ---------------------------------------------------

template <typename T>
int Network<T>::add_param(int w_size, int b_size, int fan_in) {
    ParamBlock<T> block;
    block.w.resize(static_cast<size_t>(w_size));
    block.b.resize(static_cast<size_t>(b_size), T(0));
    params_.push_back(std::move(block));
    param_fan_in_.push_back(fan_in);
    return static_cast<int>(params_.size()) - 1;
}

template <typename T>
void Network<T>::append_conv(Shape& cur, int out_c, int k, int stride, int pad,
                             const std::string& tap) {
    Op op;
    op.kind = LayerDesc::Kind::conv;
    op.in = cur;
    op.kernel = k;
    op.stride = stride;
    op.pad = pad;
    op.out.c = out_c;
    op.out.h = (cur.h + 2 * pad - k) / stride + 1;
    op.out.w = (cur.w + 2 * pad - k) / stride + 1;
    if (op.out.h <= 0 || op.out.w <= 0)
        throw std::invalid_argument("conv output collapsed; input too small");
    op.param = add_param(out_c * cur.c * k * k, out_c, cur.c * k * k);
    ops_.push_back(op);
    cur = op.out;
    if (!tap.empty()) taps_.emplace_back(tap, static_cast<int>(ops_.size()) - 1);
}

template <typename T>
void Network<T>::append_simple(LayerDesc::Kind kind, Shape& cur, double p,
                               const std::string& tap) {
    Op op;
    op.kind = kind;
    op.in = cur;
    op.p = p;
    switch (kind) {
        case LayerDesc::Kind::relu:
        case LayerDesc::Kind::dropout: op.out = cur; break;
        case LayerDesc::Kind::maxpool2:
            op.out = Shape{cur.c, cur.h / 2, cur.w / 2};
            if (op.out.h <= 0 || op.out.w <= 0)
                throw std::invalid_argument("maxpool output collapsed");
            break;
        case LayerDesc::Kind::global_avg_pool: op.out = Shape{cur.c, 1, 1}; break;
        default: throw std::logic_error("append_simple: wrong kind");
    }
    ops_.push_back(op);
    cur = op.out;
    if (!tap.empty()) taps_.emplace_back(tap, static_cast<int>(ops_.size()) - 1);
}

template <typename T>
void Network<T>::append_dense(Shape& cur, int out, const std::string& tap) {
    Op op;
    op.kind = LayerDesc::Kind::dense;
    op.in = cur;
    op.out = Shape{out, 1, 1};
    op.param = add_param(out * cur.size(), out, cur.size());
    ops_.push_back(op);
    cur = op.out;
    if (!tap.empty()) taps_.emplace_back(tap, static_cast<int>(ops_.size()) - 1);
}

template <typename T>
void Network<T>::append_bottleneck(Shape& cur, int mid, int out, int stride,
                                   const std::string& tap) {
    const Shape entry = cur;
    const int slot = skip_slots_++;
    const bool needs_proj = entry.c != out || stride != 1;

    // reduce
    append_conv(cur, mid, 1, 1, 0, {});
    Op& save = ops_[ops_.size() - 1];
    save.skip_save = true;
    save.skip_slot = slot;
    save.skip_projection = needs_proj;
    save.proj_stride = stride;
    if (needs_proj) save.proj_param = add_param(out * entry.c, out, entry.c);

    append_simple(LayerDesc::Kind::relu, cur, 0.0, {});
    append_conv(cur, mid, 3, stride, 1, {});
    append_simple(LayerDesc::Kind::relu, cur, 0.0, {});
    // expand + residual add
    append_conv(cur, out, 1, 1, 0, {});
    ops_.back().skip_add = true;
    ops_.back().skip_slot = slot;
    append_simple(LayerDesc::Kind::relu, cur, 0.0, tap);
}

template <typename T>
Network<T> Network<T>::build(const ArchitectureSpec& arch, Shape input, uint64_t init_seed) {
    Network net;
    net.arch_ = arch;
    net.input_shape_ = input;
    net.init_seed_ = init_seed;
    Shape cur = input;
    int classifier_count = 0;
    for (const auto& l : arch.layers) {
        switch (l.kind) {
            case LayerDesc::Kind::conv:
                net.append_conv(cur, l.out_channels, l.kernel, l.stride, l.pad, l.tap);
                break;
            case LayerDesc::Kind::dense:
                net.append_dense(cur, l.out_channels, l.tap);
                if (l.out_channels == arch.num_classes) ++classifier_count;
                break;
            case LayerDesc::Kind::bottleneck:
                net.append_bottleneck(cur, l.mid_channels, l.out_channels, l.stride, l.tap);
                break;
            default:
                net.append_simple(l.kind, cur, l.p, l.tap);
        }
    }
    if (cur.size() != arch.num_classes)
        throw std::invalid_argument("architecture does not end in a classifier of size " +
                                    std::to_string(arch.num_classes));

    // He-uniform: limit = sqrt(6 / fan_in), biases zero.
    Rng rng(init_seed);
    for (size_t i = 0; i < net.params_.size(); ++i) {
        const double limit = std::sqrt(6.0 / net.param_fan_in_[i]);
        for (auto& w : net.params_[i].w) w = static_cast<T>(rng.uniform(-limit, limit));
    }
    return net;
}

template <typename T>
template <typename U>
Network<T> Network<T>::from_other(const Network<U>& other) {
    Network<T> net = Network<T>::build(other.arch_, other.input_shape_, other.init_seed_);
    for (size_t i = 0; i < net.params_.size(); ++i) {
        for (size_t k = 0; k < net.params_[i].w.size(); ++k)
            net.params_[i].w[k] = static_cast<T>(other.params_[i].w[k]);
        for (size_t k = 0; k < net.params_[i].b.size(); ++k)
            net.params_[i].b[k] = static_cast<T>(other.params_[i].b[k]);
    }
    return net;
}

template <typename T>
int Network<T>::tap_index(const std::string& name) const {
    for (const auto& [tap, idx] : taps_)
        if (tap == name) return idx;
    throw std::invalid_argument("unknown tap: " + name);
}

template <typename T>
int Network<T>::tap_dim(const std::string& name) const {
    return ops_[static_cast<size_t>(tap_index(name))].out.size();
}

template <typename T>
GradBuffer<T> Network<T>::make_grad_buffer() const {
    GradBuffer<T> g;
    g.blocks.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        g.blocks[i].w.assign(params_[i].w.size(), T(0));
        g.blocks[i].b.assign(params_[i].b.size(), T(0));
    }
    return g;
}

template <typename T>
AdamState<T> Network<T>::make_adam_state() const {
    AdamState<T> s;
    s.m.resize(params_.size());
    s.v.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        s.m[i].w.assign(params_[i].w.size(), T(0));
        s.m[i].b.assign(params_[i].b.size(), T(0));
        s.v[i].w.assign(params_[i].w.size(), T(0));
        s.v[i].b.assign(params_[i].b.size(), T(0));
    }
    return s;
}

template <typename T>
size_t Network<T>::param_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.w.size() + p.b.size();
    return n;
}

template <typename T>
uint64_t Network<T>::param_checksum() const {
    Fnv1a h;
    for (const auto& p : params_) {
        h.update(p.w.data(), p.w.size() * sizeof(T));
        h.update(p.b.data(), p.b.size() * sizeof(T));
    }
    return h.digest();
}

template <typename T>
void GradBuffer<T>::zero() {
    for (auto& blk : blocks) {
        std::fill(blk.w.begin(), blk.w.end(), T(0));
        std::fill(blk.b.begin(), blk.b.end(), T(0));
    }
}

template <typename T>
void GradBuffer<T>::add(const GradBuffer& other) {
    for (size_t i = 0; i < blocks.size(); ++i) {
        for (size_t k = 0; k < blocks[i].w.size(); ++k) blocks[i].w[k] += other.blocks[i].w[k];
        for (size_t k = 0; k < blocks[i].b.size(); ++k) blocks[i].b[k] += other.blocks[i].b[k];
    }
}

template <typename T>
void GradBuffer<T>::scale(T s) {
    for (auto& blk : blocks) {
        for (auto& v : blk.w) v *= s;
        for (auto& v : blk.b) v *= s;
    }
}

// ---- workspace ---------------------------------------------------------------

template <typename T>
Workspace<T>::Workspace(const Network<T>& net) {
    const size_t n = net.ops_.size();
    input_.resize(static_cast<size_t>(net.input_shape_.size()));
    d_input_.resize(input_.size());
    acts_.resize(n);
    d_acts_.resize(n);
    pool_idx_.resize(n);
    drop_mask_.resize(n);
    scratch_.resize(n);
    d_scratch_.resize(n);
    skip_.resize(static_cast<size_t>(net.skip_slots_));
    d_skip_.resize(static_cast<size_t>(net.skip_slots_));
    for (size_t i = 0; i < n; ++i) {
        const auto& op = net.ops_[i];
        acts_[i].resize(static_cast<size_t>(op.out.size()));
        d_acts_[i].resize(static_cast<size_t>(op.out.size()));
        if (op.kind == LayerDesc::Kind::maxpool2)
            pool_idx_[i].resize(static_cast<size_t>(op.out.size()));
        if (op.kind == LayerDesc::Kind::dropout)
            drop_mask_[i].resize(static_cast<size_t>(op.out.size()));
        if (op.kind == LayerDesc::Kind::conv && op.pad > 0) {
            const size_t padded = static_cast<size_t>(op.in.c) * (op.in.h + 2 * op.pad) *
                                  (op.in.w + 2 * op.pad);
            scratch_[i].resize(padded);
            d_scratch_[i].resize(padded);
        }
    }
    for (size_t i = 0; i < n; ++i) {
        const auto& op = net.ops_[i];
        if (op.skip_save) {
            // skip buffer has the shape of the block output (= add site input)
            for (size_t j = i; j < n; ++j) {
                if (net.ops_[j].skip_add && net.ops_[j].skip_slot == op.skip_slot) {
                    const size_t sz = static_cast<size_t>(net.ops_[j].out.size());
                    skip_[static_cast<size_t>(op.skip_slot)].resize(sz);
                    d_skip_[static_cast<size_t>(op.skip_slot)].resize(sz);
                    break;
                }
            }
        }
    }
}

// ---- primitive kernels -------------------------------------------------------

namespace {

template <typename T>
void conv_forward(const T* in, int ic, int ih, int iw, const T* w, const T* b, T* out, int oc,
                  int oh, int ow, int k, int stride) {
    for (int o = 0; o < oc; ++o) {
        T* out_ch = out + static_cast<size_t>(o) * oh * ow;
        std::fill(out_ch, out_ch + static_cast<size_t>(oh) * ow, b[o]);
    }
    for (int o = 0; o < oc; ++o) {
        T* out_ch = out + static_cast<size_t>(o) * oh * ow;
        for (int i = 0; i < ic; ++i) {
            const T* in_ch = in + static_cast<size_t>(i) * ih * iw;
            const T* w_ch = w + (static_cast<size_t>(o) * ic + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = w_ch[ky * k + kx];
                    if (wv == T(0)) continue;
                    for (int oy = 0; oy < oh; ++oy) {
                        const T* in_row = in_ch + static_cast<size_t>(oy * stride + ky) * iw + kx;
                        T* out_row = out_ch + static_cast<size_t>(oy) * ow;
                        if (stride == 1) {
                            for (int ox = 0; ox < ow; ++ox) out_row[ox] += wv * in_row[ox];
                        } else {
                            for (int ox = 0; ox < ow; ++ox) out_row[ox] += wv * in_row[ox * stride];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_backward(const T* in, int ic, int ih, int iw, const T* w, const T* d_out, int oc, int oh,
                   int ow, int k, int stride, T* d_in, T* d_w, T* d_b) {
    // bias gradient
    for (int o = 0; o < oc; ++o) {
        const T* d_ch = d_out + static_cast<size_t>(o) * oh * ow;
        T acc = T(0);
        for (int p = 0; p < oh * ow; ++p) acc += d_ch[p];
        d_b[o] += acc;
    }
    for (int o = 0; o < oc; ++o) {
        const T* d_ch = d_out + static_cast<size_t>(o) * oh * ow;
        for (int i = 0; i < ic; ++i) {
            const T* in_ch = in + static_cast<size_t>(i) * ih * iw;
            T* din_ch = d_in ? d_in + static_cast<size_t>(i) * ih * iw : nullptr;
            const T* w_ch = w + (static_cast<size_t>(o) * ic + i) * k * k;
            T* dw_ch = d_w + (static_cast<size_t>(o) * ic + i) * k * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const T wv = w_ch[ky * k + kx];
                    T wacc = T(0);
                    for (int oy = 0; oy < oh; ++oy) {
                        const size_t in_off = static_cast<size_t>(oy * stride + ky) * iw + kx;
                        const T* d_row = d_ch + static_cast<size_t>(oy) * ow;
                        const T* in_row = in_ch + in_off;
                        if (stride == 1) {
                            for (int ox = 0; ox < ow; ++ox) wacc += d_row[ox] * in_row[ox];
                        } else {
                            for (int ox = 0; ox < ow; ++ox) wacc += d_row[ox] * in_row[ox * stride];
                        }
                        if (din_ch) {
                            T* din_row = din_ch + in_off;
                            if (stride == 1) {
                                for (int ox = 0; ox < ow; ++ox) din_row[ox] += wv * d_row[ox];
                            } else {
                                for (int ox = 0; ox < ow; ++ox)
                                    din_row[ox * stride] += wv * d_row[ox];
                            }
                        }
                    }
                    dw_ch[ky * k + kx] += wacc;
                }
            }
        }
    }
}

template <typename T>
void pad_copy(const T* in, int c, int h, int w, int pad, T* out) {
    const int ph = h + 2 * pad, pw = w + 2 * pad;
    std::fill(out, out + static_cast<size_t>(c) * ph * pw, T(0));
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            std::memcpy(out + (static_cast<size_t>(ch) * ph + y + pad) * pw + pad,
                        in + (static_cast<size_t>(ch) * h + y) * w, sizeof(T) * static_cast<size_t>(w));
}

template <typename T>
void pad_crop_accumulate(const T* padded, int c, int h, int w, int pad, T* out) {
    const int ph = h + 2 * pad, pw = w + 2 * pad;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            const T* src = padded + (static_cast<size_t>(ch) * ph + y + pad) * pw + pad;
            T* dst = out + (static_cast<size_t>(ch) * h + y) * w;
            for (int x = 0; x < w; ++x) dst[x] += src[x];
        }
}

}  // namespace

// ---- op execution -------------------------------------------------------------

template <typename T>
void Network<T>::run_op(const Op& op, const std::vector<T>& in, std::vector<T>& out,
                        Workspace<T>& ws, int idx, bool train, uint64_t dropout_seed) const {
    switch (op.kind) {
        case LayerDesc::Kind::conv: {
            const auto& p = params_[static_cast<size_t>(op.param)];
            const T* src = in.data();
            int ih = op.in.h, iw = op.in.w;
            if (op.pad > 0) {
                auto& padded = ws.scratch_[static_cast<size_t>(idx)];
                pad_copy(in.data(), op.in.c, op.in.h, op.in.w, op.pad, padded.data());
                src = padded.data();
                ih += 2 * op.pad;
                iw += 2 * op.pad;
            }
            conv_forward(src, op.in.c, ih, iw, p.w.data(), p.b.data(), out.data(), op.out.c,
                         op.out.h, op.out.w, op.kernel, op.stride);
            break;
        }
        case LayerDesc::Kind::relu:
            for (size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
            break;
        case LayerDesc::Kind::maxpool2: {
            auto& arg = ws.pool_idx_[static_cast<size_t>(idx)];
            const int ih = op.in.h, iw = op.in.w, ohh = op.out.h, oww = op.out.w;
            for (int c = 0; c < op.in.c; ++c) {
                const T* in_ch = in.data() + static_cast<size_t>(c) * ih * iw;
                T* out_ch = out.data() + static_cast<size_t>(c) * ohh * oww;
                int* arg_ch = arg.data() + static_cast<size_t>(c) * ohh * oww;
                for (int y = 0; y < ohh; ++y) {
                    for (int x = 0; x < oww; ++x) {
                        const int iy = 2 * y, ix = 2 * x;
                        int best = iy * iw + ix;
                        T bv = in_ch[best];
                        const int cands[3] = {iy * iw + ix + 1, (iy + 1) * iw + ix,
                                              (iy + 1) * iw + ix + 1};
                        for (int cand : cands)
                            if (in_ch[cand] > bv) {
                                bv = in_ch[cand];
                                best = cand;
                            }
                        out_ch[y * oww + x] = bv;
                        arg_ch[y * oww + x] = best;
                    }
                }
            }
            break;
        }
        case LayerDesc::Kind::dense: {
            const auto& p = params_[static_cast<size_t>(op.param)];
            const int n_in = op.in.size(), n_out = op.out.c;
            for (int o = 0; o < n_out; ++o) {
                const T* w_row = p.w.data() + static_cast<size_t>(o) * n_in;
                T acc = p.b[static_cast<size_t>(o)];
                for (int i = 0; i < n_in; ++i) acc += w_row[i] * in[static_cast<size_t>(i)];
                out[static_cast<size_t>(o)] = acc;
            }
            break;
        }
        case LayerDesc::Kind::dropout: {
            if (!train || op.p <= 0.0) {
                out = in;
                break;
            }
            auto& mask = ws.drop_mask_[static_cast<size_t>(idx)];
            Rng rng = Rng::stream(dropout_seed, static_cast<uint64_t>(idx));
            const T inv_keep = T(1.0 / (1.0 - op.p));
            for (size_t i = 0; i < in.size(); ++i) {
                const bool keep = rng.uniform() >= op.p;
                mask[i] = keep ? 1 : 0;
                out[i] = keep ? in[i] * inv_keep : T(0);
            }
            break;
        }
        case LayerDesc::Kind::global_avg_pool: {
            const int spatial = op.in.h * op.in.w;
            const T inv = T(1) / T(spatial);
            for (int c = 0; c < op.in.c; ++c) {
                const T* in_ch = in.data() + static_cast<size_t>(c) * spatial;
                T acc = T(0);
                for (int p2 = 0; p2 < spatial; ++p2) acc += in_ch[p2];
                out[static_cast<size_t>(c)] = acc * inv;
            }
            break;
        }
        default: throw std::logic_error("run_op: bad kind");
    }

    if (op.skip_save) {
        auto& skip = ws.skip_[static_cast<size_t>(op.skip_slot)];
        if (op.skip_projection) {
            const auto& p = params_[static_cast<size_t>(op.proj_param)];
            const int oc = static_cast<int>(p.b.size());
            const int oh = (op.in.h - 1) / op.proj_stride + 1;
            const int ow2 = (op.in.w - 1) / op.proj_stride + 1;
            conv_forward(in.data(), op.in.c, op.in.h, op.in.w, p.w.data(), p.b.data(), skip.data(),
                         oc, oh, ow2, 1, op.proj_stride);
        } else {
            std::copy(in.begin(), in.end(), skip.begin());
        }
    }
    if (op.skip_add) {
        const auto& skip = ws.skip_[static_cast<size_t>(op.skip_slot)];
        for (size_t i = 0; i < out.size(); ++i) out[i] += skip[i];
    }
}

template <typename T>
void Network<T>::run_op_backward(const Op& op, const std::vector<T>& in, const std::vector<T>& out,
                                 const std::vector<T>& d_out, std::vector<T>& d_in,
                                 Workspace<T>& ws, int idx, GradBuffer<T>& grads) const {
    std::fill(d_in.begin(), d_in.end(), T(0));
    if (op.skip_add) {
        // gradient flows unchanged into the saved skip branch
        auto& ds = ws.d_skip_[static_cast<size_t>(op.skip_slot)];
        std::copy(d_out.begin(), d_out.end(), ds.begin());
    }

    switch (op.kind) {
        case LayerDesc::Kind::conv: {
            const auto& p = params_[static_cast<size_t>(op.param)];
            auto& g = grads.blocks[static_cast<size_t>(op.param)];
            if (op.pad > 0) {
                // scratch_ still holds the padded forward input
                auto& padded = ws.scratch_[static_cast<size_t>(idx)];
                auto& d_padded = ws.d_scratch_[static_cast<size_t>(idx)];
                std::fill(d_padded.begin(), d_padded.end(), T(0));
                conv_backward(padded.data(), op.in.c, op.in.h + 2 * op.pad, op.in.w + 2 * op.pad,
                              p.w.data(), d_out.data(), op.out.c, op.out.h, op.out.w, op.kernel,
                              op.stride, d_padded.data(), g.w.data(), g.b.data());
                pad_crop_accumulate(d_padded.data(), op.in.c, op.in.h, op.in.w, op.pad, d_in.data());
            } else {
                conv_backward(in.data(), op.in.c, op.in.h, op.in.w, p.w.data(), d_out.data(),
                              op.out.c, op.out.h, op.out.w, op.kernel, op.stride, d_in.data(),
                              g.w.data(), g.b.data());
            }
            break;
        }
        case LayerDesc::Kind::relu:
            for (size_t i = 0; i < d_out.size(); ++i) d_in[i] = out[i] > T(0) ? d_out[i] : T(0);
            break;
        case LayerDesc::Kind::maxpool2: {
            const auto& arg = ws.pool_idx_[static_cast<size_t>(idx)];
            const int spatial_out = op.out.h * op.out.w;
            const int spatial_in = op.in.h * op.in.w;
            for (int c = 0; c < op.in.c; ++c) {
                const T* d_ch = d_out.data() + static_cast<size_t>(c) * spatial_out;
                T* din_ch = d_in.data() + static_cast<size_t>(c) * spatial_in;
                const int* arg_ch = arg.data() + static_cast<size_t>(c) * spatial_out;
                for (int p2 = 0; p2 < spatial_out; ++p2) din_ch[arg_ch[p2]] += d_ch[p2];
            }
            break;
        }
        case LayerDesc::Kind::dense: {
            const auto& p = params_[static_cast<size_t>(op.param)];
            auto& g = grads.blocks[static_cast<size_t>(op.param)];
            const int n_in = op.in.size(), n_out = op.out.c;
            for (int o = 0; o < n_out; ++o) {
                const T dv = d_out[static_cast<size_t>(o)];
                g.b[static_cast<size_t>(o)] += dv;
                if (dv == T(0)) continue;
                const T* w_row = p.w.data() + static_cast<size_t>(o) * n_in;
                T* gw_row = g.w.data() + static_cast<size_t>(o) * n_in;
                for (int i = 0; i < n_in; ++i) {
                    gw_row[i] += dv * in[static_cast<size_t>(i)];
                    d_in[static_cast<size_t>(i)] += dv * w_row[i];
                }
            }
            break;
        }
        case LayerDesc::Kind::dropout: {
            if (!ws.dropout_active_ || op.p <= 0.0) {
                d_in = d_out;
                break;
            }
            const auto& mask = ws.drop_mask_[static_cast<size_t>(idx)];
            const T inv_keep = T(1.0 / (1.0 - op.p));
            for (size_t i = 0; i < d_out.size(); ++i)
                d_in[i] = mask[i] ? d_out[i] * inv_keep : T(0);
            break;
        }
        case LayerDesc::Kind::global_avg_pool: {
            const int spatial = op.in.h * op.in.w;
            const T inv = T(1) / T(spatial);
            for (int c = 0; c < op.in.c; ++c) {
                const T dv = d_out[static_cast<size_t>(c)] * inv;
                T* din_ch = d_in.data() + static_cast<size_t>(c) * spatial;
                for (int p2 = 0; p2 < spatial; ++p2) din_ch[p2] += dv;
            }
            break;
        }
        default: throw std::logic_error("run_op_backward: bad kind");
    }

    if (op.skip_save) {
        const auto& ds = ws.d_skip_[static_cast<size_t>(op.skip_slot)];
        if (op.skip_projection) {
            const auto& p = params_[static_cast<size_t>(op.proj_param)];
            auto& g = grads.blocks[static_cast<size_t>(op.proj_param)];
            const int oc = static_cast<int>(p.b.size());
            const int oh = (op.in.h - 1) / op.proj_stride + 1;
            const int ow2 = (op.in.w - 1) / op.proj_stride + 1;
            conv_backward(in.data(), op.in.c, op.in.h, op.in.w, p.w.data(), ds.data(), oc, oh, ow2,
                          1, op.proj_stride, d_in.data(), g.w.data(), g.b.data());
        } else {
            for (size_t i = 0; i < ds.size(); ++i) d_in[i] += ds[i];
        }
    }
}

template <typename T>
void Network<T>::forward(const T* image, Workspace<T>& ws, bool train,
                         uint64_t dropout_seed) const {
    std::copy(image, image + input_shape_.size(), ws.input_.begin());
    ws.dropout_active_ = train;
    const std::vector<T>* cur = &ws.input_;
    for (size_t i = 0; i < ops_.size(); ++i) {
        run_op(ops_[i], *cur, ws.acts_[i], ws, static_cast<int>(i), train, dropout_seed);
        cur = &ws.acts_[i];
    }
}

template <typename T>
T Network<T>::cross_entropy(const std::vector<T>& scores, int label) {
    T mx = scores[0];
    for (T s : scores) mx = std::max(mx, s);
    T lse = T(0);
    for (T s : scores) lse += std::exp(s - mx);
    return std::log(lse) + mx - scores[static_cast<size_t>(label)];
}

template <typename T>
T Network<T>::fd_kink_margin(const Workspace<T>& ws) const {
    T margin = std::numeric_limits<T>::max();
    for (size_t i = 0; i < ops_.size(); ++i) {
        const auto& op = ops_[i];
        const std::vector<T>& in = i == 0 ? ws.input_ : ws.acts_[i - 1];
        if (op.kind == LayerDesc::Kind::relu) {
            for (const T v : in) margin = std::min(margin, std::abs(v));
        } else if (op.kind == LayerDesc::Kind::maxpool2) {
            const int ih = op.in.h, iw = op.in.w;
            for (int c = 0; c < op.in.c; ++c) {
                const T* in_ch = in.data() + static_cast<size_t>(c) * ih * iw;
                for (int y = 0; y < op.out.h; ++y)
                    for (int x = 0; x < op.out.w; ++x) {
                        const T v[4] = {in_ch[2 * y * iw + 2 * x], in_ch[2 * y * iw + 2 * x + 1],
                                        in_ch[(2 * y + 1) * iw + 2 * x],
                                        in_ch[(2 * y + 1) * iw + 2 * x + 1]};
                        T best = v[0], second = -std::numeric_limits<T>::max();
                        for (int k = 1; k < 4; ++k) {
                            if (v[k] > best) {
                                second = best;
                                best = v[k];
                            } else {
                                second = std::max(second, v[k]);
                            }
                        }
                        // all-zero windows (rectified away) tie harmlessly
                        if (best <= T(0)) continue;
                        margin = std::min(margin, best - second);
                    }
            }
        }
    }
    return margin;
}

template <typename T>
T Network<T>::loss_and_grad(const T* image, int label, Workspace<T>& ws, GradBuffer<T>& grads,
                            uint64_t dropout_seed) const {
    if (label < 0 || label >= arch_.num_classes)
        throw std::out_of_range("label out of range: " + std::to_string(label));
    forward(image, ws, true, dropout_seed);
    const auto& scores = ws.acts_.back();
    const T loss = cross_entropy(scores, label);

    // dL/dscores = softmax - onehot
    auto& d_scores = ws.d_acts_.back();
    T mx = scores[0];
    for (T s : scores) mx = std::max(mx, s);
    T lse = T(0);
    for (T s : scores) lse += std::exp(s - mx);
    for (size_t i = 0; i < scores.size(); ++i) d_scores[i] = std::exp(scores[i] - mx) / lse;
    d_scores[static_cast<size_t>(label)] -= T(1);

    for (int i = static_cast<int>(ops_.size()) - 1; i >= 0; --i) {
        const std::vector<T>& in = i == 0 ? ws.input_ : ws.acts_[static_cast<size_t>(i) - 1];
        std::vector<T>& d_in = i == 0 ? ws.d_input_ : ws.d_acts_[static_cast<size_t>(i) - 1];
        run_op_backward(ops_[static_cast<size_t>(i)], in, ws.acts_[static_cast<size_t>(i)],
                        ws.d_acts_[static_cast<size_t>(i)], d_in, ws, i, grads);
    }
    return loss;
}

template <typename T>
void Network<T>::adam_step(const GradBuffer<T>& grads, AdamState<T>& state, double lr,
                           const AdamConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto update = [&](std::vector<T>& p, std::vector<T>& m, std::vector<T>& v,
                      const std::vector<T>& g) {
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1, vhat = vi / bc2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) -
                                  lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    };
    for (size_t i = 0; i < params_.size(); ++i) {
        update(params_[i].w, state.m[i].w, state.v[i].w, grads.blocks[i].w);
        update(params_[i].b, state.m[i].b, state.v[i].b, grads.blocks[i].b);
    }
}

// ---- training ------------------------------------------------------------------

int default_thread_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::min(hw == 0 ? 1u : hw, 8u));
}

namespace {

int resolve_threads(int requested) {
    return requested <= 0 ? default_thread_count() : requested;
}

// Deterministic parallel map over [0, n): fixed contiguous chunks per worker.
template <typename Fn>
void parallel_chunks(int n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        fn(0, 0, n);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        const int lo = static_cast<int>(static_cast<int64_t>(n) * t / workers);
        const int hi = static_cast<int>(static_cast<int64_t>(n) * (t + 1) / workers);
        pool.emplace_back([&, t, lo, hi] { fn(t, lo, hi); });
    }
    for (auto& th : pool) th.join();
}

uint64_t sample_stream_seed(uint64_t seed, int epoch, int64_t global_index) {
    Fnv1a h;
    h.update(&seed, sizeof seed);
    h.update(&epoch, sizeof epoch);
    h.update(&global_index, sizeof global_index);
    return h.digest();
}

int argmax_lowest(const std::vector<float>& scores) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)]) best = i;
    return best;
}

}  // namespace

TrainResult train(Network<float>& net, const SampleSet& train_set, const SampleSet& val_set,
                  const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("train: empty train or validation set");
    if (cfg.epochs <= 0 || cfg.base_lr <= 0.0) throw std::invalid_argument("train: bad config");
    const int threads = resolve_threads(cfg.threads);

    AdamState<float> state = net.make_adam_state();
    std::vector<Workspace<float>> ws;
    std::vector<GradBuffer<float>> partial;
    for (int t = 0; t < threads; ++t) {
        ws.emplace_back(net);
        partial.push_back(net.make_grad_buffer());
    }
    GradBuffer<float> grads = net.make_grad_buffer();

    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    TrainResult result;
    std::vector<ParamBlock<float>> best_params = net.params();
    int64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr =
            cfg.base_lr * std::pow(cfg.decay_factor, epoch / std::max(1, cfg.decay_every_epochs));
        Rng shuffle_rng = Rng::stream(cfg.seed, 0x5u + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const int bsz = static_cast<int>(
                std::min(static_cast<size_t>(cfg.batch_size), order.size() - start));
            grads.zero();
            std::vector<double> losses(static_cast<size_t>(bsz), 0.0);
            parallel_chunks(bsz, threads, [&](int tid, int lo, int hi) {
                partial[static_cast<size_t>(tid)].zero();
                for (int s = lo; s < hi; ++s) {
                    const auto& sample = train_set[static_cast<size_t>(order[start + static_cast<size_t>(s)])];
                    const uint64_t dseed = sample_stream_seed(
                        cfg.seed, epoch, static_cast<int64_t>(start) + s);
                    losses[static_cast<size_t>(s)] = net.loss_and_grad(
                        sample.image.data(), sample.label, ws[static_cast<size_t>(tid)],
                        partial[static_cast<size_t>(tid)], dseed);
                }
            });
            const int used = std::min(threads, bsz);
            for (int t = 0; t < used; ++t) grads.add(partial[static_cast<size_t>(t)]);
            grads.scale(1.0f / static_cast<float>(bsz));
            double batch_loss = 0.0;
            for (double l : losses) batch_loss += l;
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss)) {
                if (cfg.divergence_dump) save_checkpoint(net, *cfg.divergence_dump, &state);
                throw std::runtime_error("training diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch) + ", batch index " +
                                         std::to_string(start / static_cast<size_t>(cfg.batch_size)));
            }
            epoch_loss += batch_loss * bsz;
            seen += static_cast<size_t>(bsz);
            net.adam_step(grads, state, lr);
            ++global_step;
        }

        const double val_top1 = evaluate_top1(net, val_set, threads);
        result.log.push_back({epoch, epoch_loss / static_cast<double>(seen), val_top1, lr});
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %3d loss %.4f val %.3f lr %.2e\n", epoch,
                         epoch_loss / static_cast<double>(seen), val_top1, lr);
        if (result.best_epoch < 0 || val_top1 > result.best_val_top1) {
            result.best_epoch = epoch;
            result.best_val_top1 = val_top1;
            best_params = net.params();
        }
    }
    net.params() = std::move(best_params);
    return result;
}

double evaluate_top1(const Network<float>& net, const SampleSet& set, int threads) {
    if (set.empty()) return 0.0;
    const int nt = resolve_threads(threads);
    std::vector<int> hits(static_cast<size_t>(nt), 0);
    std::vector<Workspace<float>> ws;
    for (int t = 0; t < nt; ++t) ws.emplace_back(net);
    parallel_chunks(static_cast<int>(set.size()), nt, [&](int tid, int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const auto& s = set[static_cast<size_t>(i)];
            net.forward(s.image.data(), ws[static_cast<size_t>(tid)], false);
            if (argmax_lowest(ws[static_cast<size_t>(tid)].scores()) == s.label)
                ++hits[static_cast<size_t>(tid)];
        }
    });
    int total = 0;
    for (int h : hits) total += h;
    return static_cast<double>(total) / static_cast<double>(set.size());
}

std::vector<std::vector<float>> score_set(const Network<float>& net, const SampleSet& set,
                                          int threads) {
    const int nt = resolve_threads(threads);
    std::vector<std::vector<float>> out(set.size());
    std::vector<Workspace<float>> ws;
    for (int t = 0; t < nt; ++t) ws.emplace_back(net);
    parallel_chunks(static_cast<int>(set.size()), nt, [&](int tid, int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            net.forward(set[static_cast<size_t>(i)].image.data(), ws[static_cast<size_t>(tid)],
                        false);
            out[static_cast<size_t>(i)] = ws[static_cast<size_t>(tid)].scores();
        }
    });
    return out;
}

std::vector<ActivationBatch> extract_activations(const Network<float>& net, const SampleSet& set,
                                                 const std::vector<std::string>& taps,
                                                 int threads) {
    const int nt = resolve_threads(threads);
    std::vector<ActivationBatch> out;
    std::vector<int> indices;
    for (const auto& tap : taps) {
        ActivationBatch b;
        b.tap = tap;
        b.dim = net.tap_dim(tap);
        b.data.resize(set.size() * static_cast<size_t>(b.dim));
        out.push_back(std::move(b));
        indices.push_back(net.tap_index(tap));
    }
    std::vector<Workspace<float>> ws;
    for (int t = 0; t < nt; ++t) ws.emplace_back(net);
    parallel_chunks(static_cast<int>(set.size()), nt, [&](int tid, int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            net.forward(set[static_cast<size_t>(i)].image.data(), ws[static_cast<size_t>(tid)],
                        false);
            for (size_t k = 0; k < indices.size(); ++k) {
                const auto& act = ws[static_cast<size_t>(tid)].activation(indices[k]);
                std::copy(act.begin(), act.end(),
                          out[k].data.begin() + static_cast<size_t>(i) * static_cast<size_t>(out[k].dim));
            }
        }
    });
    return out;
}

namespace {

SampleSet features_to_samples(const ActivationBatch& feats, const SampleSet& src) {
    SampleSet out(src.size());
    for (size_t i = 0; i < src.size(); ++i) {
        out[i].label = src[i].label;
        out[i].image.assign(feats.row(i), feats.row(i) + feats.dim);
    }
    return out;
}

}  // namespace

ProbeResult train_probe(const Network<float>& base, const std::string& tap,
                        const SampleSet& train_set, const SampleSet& val_set,
                        const TrainConfig& cfg) {
    const uint64_t before = base.param_checksum();
    const auto train_feats = extract_activations(base, train_set, {tap}, cfg.threads);
    const auto val_feats = extract_activations(base, val_set, {tap}, cfg.threads);

    ProbeResult result;
    result.tap = tap;
    result.probe = Network<float>::build(linear_probe_arch(base.num_classes()),
                                         Shape{train_feats[0].dim, 1, 1}, cfg.seed ^ 0x9e03u);
    SampleSet ptrain = features_to_samples(train_feats[0], train_set);
    SampleSet pval = features_to_samples(val_feats[0], val_set);
    result.training = train(result.probe, ptrain, pval, cfg);
    if (base.param_checksum() != before)
        throw std::logic_error("probe training modified the frozen base network");
    return result;
}

std::vector<std::vector<float>> probe_scores(const Network<float>& base, const ProbeResult& probe,
                                             const SampleSet& set, int threads) {
    const auto feats = extract_activations(base, set, {probe.tap}, threads);
    SampleSet fs = features_to_samples(feats[0], set);
    return score_set(probe.probe, fs, threads);
}

// ---- checkpoints ------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'C', 'C', 'N', 'E', 'T', '0', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
}

void write_tensor(std::ofstream& out, const std::vector<float>& v) {
    const uint64_t n = v.size();
    write_pod(out, n);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
}

void read_tensor(std::ifstream& in, std::vector<float>& v) {
    uint64_t n = 0;
    read_pod(in, n);
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
}

}  // namespace

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path,
                     const AdamState<float>* state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::string arch = net.arch().to_json();
    const uint64_t arch_len = arch.size();
    write_pod(out, arch_len);
    out.write(arch.data(), static_cast<std::streamsize>(arch.size()));
    const auto shape = net.input_shape();
    write_pod(out, shape.c);
    write_pod(out, shape.h);
    write_pod(out, shape.w);
    const uint64_t blocks = net.params().size();
    write_pod(out, blocks);
    for (const auto& p : net.params()) {
        write_tensor(out, p.w);
        write_tensor(out, p.b);
    }
    const uint8_t has_state = state ? 1 : 0;
    write_pod(out, has_state);
    if (state) {
        write_pod(out, state->t);
        for (size_t i = 0; i < state->m.size(); ++i) {
            write_tensor(out, state->m[i].w);
            write_tensor(out, state->m[i].b);
            write_tensor(out, state->v[i].w);
            write_tensor(out, state->v[i].b);
        }
    }
    if (!out) throw std::runtime_error("short checkpoint write: " + path.string());
}

Network<float> load_checkpoint(const std::filesystem::path& path, AdamState<float>* state) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("bad checkpoint magic/version: " + path.string());
    uint64_t arch_len = 0;
    read_pod(in, arch_len);
    std::string arch_text(arch_len, '\0');
    in.read(arch_text.data(), static_cast<std::streamsize>(arch_len));
    Shape shape;
    read_pod(in, shape.c);
    read_pod(in, shape.h);
    read_pod(in, shape.w);
    Network<float> net =
        Network<float>::build(ArchitectureSpec::from_json(arch_text), shape, /*init_seed=*/0);
    uint64_t blocks = 0;
    read_pod(in, blocks);
    if (blocks != net.params().size())
        throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
    for (auto& p : net.params()) {
        read_tensor(in, p.w);
        read_tensor(in, p.b);
    }
    uint8_t has_state = 0;
    read_pod(in, has_state);
    if (has_state) {
        AdamState<float> s = net.make_adam_state();
        read_pod(in, s.t);
        for (size_t i = 0; i < s.m.size(); ++i) {
            read_tensor(in, s.m[i].w);
            read_tensor(in, s.m[i].b);
            read_tensor(in, s.v[i].w);
            read_tensor(in, s.v[i].b);
        }
        if (state) *state = std::move(s);
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return net;
}

// ---- explicit instantiations --------------------------------------------------

template class Network<float>;
template class Network<double>;
template class Workspace<float>;
template class Workspace<double>;
template struct GradBuffer<float>;
template struct GradBuffer<double>;
template Network<double> Network<double>::from_other<float>(const Network<float>&);
template Network<float> Network<float>::from_other<double>(const Network<double>&);

}  // namespace cclab::nn
