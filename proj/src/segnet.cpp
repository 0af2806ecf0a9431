#include "retina/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "retina/error.hpp"
#include "retina/model_io.hpp"
#include "retina/rng.hpp"

namespace retina::seg {

namespace {

int skip_channels(int level_channels) { return std::max(1, level_channels / 2); }

ConvLayer make_conv(int in_ch, int out_ch, int ksize) {
    ConvLayer l;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.ksize = ksize;
    l.weights.assign(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize, 0.0);
    l.bias.assign(out_ch, 0.0);
    return l;
}

// ---- primitives ----

void conv_forward(const ConvLayer& l, const Tensor4& in, Tensor4& out) {
    const int k = l.ksize, pad = k / 2;
    const int hh = in.h, ww = in.w;
    for (int i = 0; i < in.n; ++i) {
        for (int oc = 0; oc < l.out_ch; ++oc) {
            double* op = out.plane(i, oc);
            std::fill(op, op + static_cast<std::size_t>(hh) * ww, l.bias[oc]);
            for (int ic = 0; ic < l.in_ch; ++ic) {
                const double* ip = in.plane(i, ic);
                const double* wbase =
                    &l.weights[(static_cast<std::size_t>(oc) * l.in_ch + ic) * k * k];
                for (int ky = 0; ky < k; ++ky) {
                    const int sy = ky - pad;
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wbase[ky * k + kx];
                        if (wv == 0.0) continue;
                        const int sx = kx - pad;
                        const int y0 = std::max(0, -sy), y1 = std::min(hh, hh - sy);
                        const int x0 = std::max(0, -sx), x1 = std::min(ww, ww - sx);
                        for (int y = y0; y < y1; ++y) {
                            double* orow = op + static_cast<std::size_t>(y) * ww;
                            const double* irow =
                                ip + static_cast<std::size_t>(y + sy) * ww + sx;
                            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                        }
                    }
                }
            }
        }
    }
}

// accumulates into grad_w/grad_b and fills grad_in (if non-null)
void conv_backward(const ConvLayer& l, const Tensor4& in, const Tensor4& grad_out,
                   Tensor4* grad_in, std::vector<double>& grad_w, std::vector<double>& grad_b) {
    const int k = l.ksize, pad = k / 2;
    const int hh = in.h, ww = in.w;
    for (int i = 0; i < in.n; ++i) {
        for (int oc = 0; oc < l.out_ch; ++oc) {
            const double* gp = grad_out.plane(i, oc);
            double bsum = 0.0;
            for (std::size_t t = 0; t < static_cast<std::size_t>(hh) * ww; ++t) bsum += gp[t];
            grad_b[oc] += bsum;
            for (int ic = 0; ic < l.in_ch; ++ic) {
                const double* ip = in.plane(i, ic);
                double* gip = grad_in ? grad_in->plane(i, ic) : nullptr;
                double* wg = &grad_w[(static_cast<std::size_t>(oc) * l.in_ch + ic) * k * k];
                const double* wbase =
                    &l.weights[(static_cast<std::size_t>(oc) * l.in_ch + ic) * k * k];
                for (int ky = 0; ky < k; ++ky) {
                    const int sy = ky - pad;
                    for (int kx = 0; kx < k; ++kx) {
                        const int sx = kx - pad;
                        const int y0 = std::max(0, -sy), y1 = std::min(hh, hh - sy);
                        const int x0 = std::max(0, -sx), x1 = std::min(ww, ww - sx);
                        double wsum = 0.0;
                        const double wv = wbase[ky * k + kx];
                        for (int y = y0; y < y1; ++y) {
                            const double* grow = gp + static_cast<std::size_t>(y) * ww;
                            const double* irow =
                                ip + static_cast<std::size_t>(y + sy) * ww + sx;
                            double* girow =
                                gip ? gip + static_cast<std::size_t>(y + sy) * ww + sx : nullptr;
                            for (int x = x0; x < x1; ++x) {
                                wsum += grow[x] * irow[x];
                                if (girow) girow[x] += wv * grow[x];
                            }
                        }
                        wg[ky * k + kx] += wsum;
                    }
                }
            }
        }
    }
}

Tensor4 relu(const Tensor4& t) {
    Tensor4 out = t;
    for (double& v : out.data) v = v > 0 ? v : 0.0;
    return out;
}

// grad through ReLU given the pre-activation values; ReLU'(0) = 0
void relu_backward_inplace(Tensor4& grad, const Tensor4& pre) {
    for (std::size_t i = 0; i < grad.data.size(); ++i)
        if (!(pre.data[i] > 0)) grad.data[i] = 0.0;
}

void maxpool2(const Tensor4& in, Tensor4& out, std::vector<std::int32_t>& argmax) {
    out = Tensor4(in.n, in.c, in.h / 2, in.w / 2);
    argmax.assign(out.data.size(), 0);
    std::size_t oi = 0;
    for (int i = 0; i < in.n; ++i) {
        for (int ci = 0; ci < in.c; ++ci) {
            const double* ip = in.plane(i, ci);
            for (int y = 0; y < out.h; ++y) {
                for (int x = 0; x < out.w; ++x, ++oi) {
                    // first maximum in scan order wins
                    int best = (2 * y) * in.w + 2 * x;
                    double bv = ip[best];
                    const int cand[3] = {(2 * y) * in.w + 2 * x + 1, (2 * y + 1) * in.w + 2 * x,
                                         (2 * y + 1) * in.w + 2 * x + 1};
                    for (int idx : cand) {
                        if (ip[idx] > bv) {
                            bv = ip[idx];
                            best = idx;
                        }
                    }
                    out.data[oi] = bv;
                    argmax[oi] = best;
                }
            }
        }
    }
}

void maxpool2_backward(const Tensor4& grad_out, const std::vector<std::int32_t>& argmax,
                       Tensor4& grad_in) {
    std::size_t oi = 0;
    for (int i = 0; i < grad_out.n; ++i) {
        for (int ci = 0; ci < grad_out.c; ++ci) {
            double* gip = grad_in.plane(i, ci);
            for (int y = 0; y < grad_out.h; ++y)
                for (int x = 0; x < grad_out.w; ++x, ++oi) gip[argmax[oi]] += grad_out.data[oi];
        }
    }
}

Tensor4 upsample2(const Tensor4& in) {
    Tensor4 out(in.n, in.c, in.h * 2, in.w * 2);
    for (int i = 0; i < in.n; ++i)
        for (int ci = 0; ci < in.c; ++ci) {
            const double* ip = in.plane(i, ci);
            double* op = out.plane(i, ci);
            for (int y = 0; y < out.h; ++y) {
                const double* irow = ip + static_cast<std::size_t>(y / 2) * in.w;
                double* orow = op + static_cast<std::size_t>(y) * out.w;
                for (int x = 0; x < out.w; ++x) orow[x] = irow[x / 2];
            }
        }
    return out;
}

Tensor4 upsample2_backward(const Tensor4& grad_out) {
    Tensor4 grad_in(grad_out.n, grad_out.c, grad_out.h / 2, grad_out.w / 2);
    for (int i = 0; i < grad_out.n; ++i)
        for (int ci = 0; ci < grad_out.c; ++ci) {
            const double* gp = grad_out.plane(i, ci);
            double* gip = grad_in.plane(i, ci);
            for (int y = 0; y < grad_out.h; ++y) {
                const double* grow = gp + static_cast<std::size_t>(y) * grad_out.w;
                double* girow = gip + static_cast<std::size_t>(y / 2) * grad_in.w;
                for (int x = 0; x < grad_out.w; ++x) girow[x / 2] += grow[x];
            }
        }
    return grad_in;
}

// concat(a, first `skip_ch` channels of b) along the channel axis
Tensor4 concat_with_skip(const Tensor4& a, const Tensor4& b, int skip_ch) {
    Tensor4 out(a.n, a.c + skip_ch, a.h, a.w);
    const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
    for (int i = 0; i < a.n; ++i) {
        for (int ci = 0; ci < a.c; ++ci)
            std::copy_n(a.plane(i, ci), plane, out.plane(i, ci));
        for (int ci = 0; ci < skip_ch; ++ci)
            std::copy_n(b.plane(i, ci), plane, out.plane(i, a.c + ci));
    }
    return out;
}

Tensor4 softmax_channels(const Tensor4& logits) {
    Tensor4 probs(logits.n, logits.c, logits.h, logits.w);
    const std::size_t plane = static_cast<std::size_t>(logits.h) * logits.w;
    for (int i = 0; i < logits.n; ++i) {
        for (std::size_t t = 0; t < plane; ++t) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int ci = 0; ci < logits.c; ++ci) mx = std::max(mx, logits.plane(i, ci)[t]);
            double sum = 0.0;
            for (int ci = 0; ci < logits.c; ++ci) {
                const double e = std::exp(logits.plane(i, ci)[t] - mx);
                probs.plane(i, ci)[t] = e;
                sum += e;
            }
            for (int ci = 0; ci < logits.c; ++ci) probs.plane(i, ci)[t] /= sum;
        }
    }
    return probs;
}

// ---- architecture walk ----

struct Trace {
    std::vector<Tensor4> enc_pre1, enc_act1, enc_pre2, enc_act2, pooled;
    std::vector<std::vector<std::int32_t>> pool_argmax;
    Tensor4 bott_pre1, bott_act1, bott_pre2, bott_act2;
    // decoder, deepest level first (index 0 = level depth-1)
    std::vector<Tensor4> up_in, upsampled, up_pre, up_act, cat, dec_pre1, dec_act1, dec_pre2,
        dec_act2;
    Tensor4 logits, probs;
};

void check_batch(const SegNet& net, const Tensor4& batch) {
    const auto& cfg = net.config;
    if (batch.c != cfg.in_channels)
        throw InvalidArgument("forward: batch channel count does not match the net");
    const int div = 1 << cfg.depth;
    if (batch.h % div != 0 || batch.w % div != 0)
        throw InvalidArgument("forward: spatial dims must be divisible by 2^depth");
}

Tensor4 forward_impl(const SegNet& net, const Tensor4& batch, Trace* trace) {
    check_batch(net, batch);
    const auto& cfg = net.config;
    Trace local;
    Trace& t = trace ? *trace : local;
    const int d = cfg.depth;

    t.enc_pre1.resize(d);
    t.enc_act1.resize(d);
    t.enc_pre2.resize(d);
    t.enc_act2.resize(d);
    t.pooled.resize(d);
    t.pool_argmax.resize(d);

    std::size_t li = 0;
    const Tensor4* cur = &batch;
    for (int i = 0; i < d; ++i) {
        const ConvLayer& c1 = net.layers[li++];
        const ConvLayer& c2 = net.layers[li++];
        t.enc_pre1[i] = Tensor4(cur->n, c1.out_ch, cur->h, cur->w);
        conv_forward(c1, *cur, t.enc_pre1[i]);
        t.enc_act1[i] = relu(t.enc_pre1[i]);
        t.enc_pre2[i] = Tensor4(cur->n, c2.out_ch, cur->h, cur->w);
        conv_forward(c2, t.enc_act1[i], t.enc_pre2[i]);
        t.enc_act2[i] = relu(t.enc_pre2[i]);
        maxpool2(t.enc_act2[i], t.pooled[i], t.pool_argmax[i]);
        cur = &t.pooled[i];
    }

    const ConvLayer& b1 = net.layers[li++];
    const ConvLayer& b2 = net.layers[li++];
    t.bott_pre1 = Tensor4(cur->n, b1.out_ch, cur->h, cur->w);
    conv_forward(b1, *cur, t.bott_pre1);
    t.bott_act1 = relu(t.bott_pre1);
    t.bott_pre2 = Tensor4(cur->n, b2.out_ch, cur->h, cur->w);
    conv_forward(b2, t.bott_act1, t.bott_pre2);
    t.bott_act2 = relu(t.bott_pre2);
    cur = &t.bott_act2;

    t.up_in.resize(d);
    t.upsampled.resize(d);
    t.up_pre.resize(d);
    t.up_act.resize(d);
    t.cat.resize(d);
    t.dec_pre1.resize(d);
    t.dec_act1.resize(d);
    t.dec_pre2.resize(d);
    t.dec_act2.resize(d);

    for (int s = 0; s < d; ++s) { // s = 0 is the deepest decoder level
        const int level = d - 1 - s;
        const ConvLayer& up = net.layers[li++];
        const ConvLayer& c1 = net.layers[li++];
        const ConvLayer& c2 = net.layers[li++];

        t.up_in[s] = *cur;
        t.upsampled[s] = upsample2(t.up_in[s]);
        t.up_pre[s] = Tensor4(batch.n, up.out_ch, t.upsampled[s].h, t.upsampled[s].w);
        conv_forward(up, t.upsampled[s], t.up_pre[s]);
        t.up_act[s] = relu(t.up_pre[s]);

        const int skip = skip_channels(t.enc_act2[level].c);
        t.cat[s] = concat_with_skip(t.up_act[s], t.enc_act2[level], skip);
        t.dec_pre1[s] = Tensor4(batch.n, c1.out_ch, t.cat[s].h, t.cat[s].w);
        conv_forward(c1, t.cat[s], t.dec_pre1[s]);
        t.dec_act1[s] = relu(t.dec_pre1[s]);
        t.dec_pre2[s] = Tensor4(batch.n, c2.out_ch, t.cat[s].h, t.cat[s].w);
        conv_forward(c2, t.dec_act1[s], t.dec_pre2[s]);
        t.dec_act2[s] = relu(t.dec_pre2[s]);
        cur = &t.dec_act2[s];
    }

    const ConvLayer& head = net.layers[li++];
    t.logits = Tensor4(batch.n, head.out_ch, cur->h, cur->w);
    conv_forward(head, *cur, t.logits);
    t.probs = softmax_channels(t.logits);
    return t.probs;
}

} // namespace

SegNet SegNet::make(const SegNetConfig& config) {
    if (config.depth < 1 || config.base_channels < 1 || config.in_channels < 1 ||
        config.num_classes < 2)
        throw InvalidArgument("invalid SegNetConfig");
    SegNet net;
    net.config = config;
    const int d = config.depth, b = config.base_channels;

    int in_ch = config.in_channels;
    for (int i = 0; i < d; ++i) {
        const int ch = b << i;
        net.layers.push_back(make_conv(in_ch, ch, 3));
        net.layers.push_back(make_conv(ch, ch, 3));
        in_ch = ch;
    }
    const int bott = b << d;
    net.layers.push_back(make_conv(in_ch, bott, 3));
    net.layers.push_back(make_conv(bott, bott, 3));

    int above = bott;
    for (int i = d - 1; i >= 0; --i) {
        const int ch = b << i;
        net.layers.push_back(make_conv(above, ch, 3));                       // upconv
        net.layers.push_back(make_conv(ch + skip_channels(ch), ch, 3));      // dec conv1
        net.layers.push_back(make_conv(ch, ch, 3));                          // dec conv2
        above = ch;
    }
    net.layers.push_back(make_conv(b, config.num_classes, 1)); // head
    return net;
}

SegNet SegNet::init(const SegNetConfig& config, std::uint64_t seed) {
    SegNet net = make(config);
    const Rng base(seed);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        ConvLayer& l = net.layers[li];
        Rng rng = base.derive("segnet-layer", li);
        const double stddev = std::sqrt(2.0 / (static_cast<double>(l.in_ch) * l.ksize * l.ksize));
        for (double& w : l.weights) w = rng.normal(0.0, stddev);
    }
    return net;
}

std::size_t SegNet::param_count() const {
    std::size_t n = 0;
    for (const ConvLayer& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<double> SegNet::flatten_params() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const ConvLayer& l : layers) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

void SegNet::set_params(std::span<const double> params) {
    if (params.size() != param_count())
        throw InvalidArgument("set_params: wrong parameter count");
    std::size_t p = 0;
    for (ConvLayer& l : layers) {
        std::copy_n(params.begin() + p, l.weights.size(), l.weights.begin());
        p += l.weights.size();
        std::copy_n(params.begin() + p, l.bias.size(), l.bias.begin());
        p += l.bias.size();
    }
}

Tensor4 forward(const SegNet& net, const Tensor4& batch) {
    return forward_impl(net, batch, nullptr);
}

// ---- weight map ----

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// large finite stand-in for "no source here"; keeps the envelope
// intersections finite while dwarfing any real squared distance
constexpr double kFar = 1e20;

// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher)
void dt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
           std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + static_cast<double>(q) * q) -
                 (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
            if (s <= z[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

// exact squared EDT of `grid` (0 inside the set, kFar outside)
void edt_squared(std::vector<double>& grid, int width, int height) {
    const int n = std::max(width, height);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);
    // columns
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) f[y] = grid[static_cast<std::size_t>(y) * width + x];
        dt_1d(f, d, v, z, height);
        for (int y = 0; y < height; ++y) grid[static_cast<std::size_t>(y) * width + x] = d[y];
    }
    // rows
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) f[x] = grid[static_cast<std::size_t>(y) * width + x];
        dt_1d(f, d, v, z, width);
        for (int x = 0; x < width; ++x) grid[static_cast<std::size_t>(y) * width + x] = d[x];
    }
}

// 4-connected component labels; 0 = background, components numbered from 1
int label_components(const MaskImage& mask, std::vector<int>& labels) {
    labels.assign(mask.pixels.size(), 0);
    int next = 0;
    std::deque<int> queue;
    for (std::size_t start = 0; start < mask.pixels.size(); ++start) {
        if (mask.pixels[start] == 0 || labels[start] != 0) continue;
        ++next;
        labels[start] = next;
        queue.push_back(static_cast<int>(start));
        while (!queue.empty()) {
            const int p = queue.front();
            queue.pop_front();
            const int x = p % mask.width, y = p / mask.width;
            const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[0] >= mask.width || q[1] < 0 || q[1] >= mask.height) continue;
                const int qi = q[1] * mask.width + q[0];
                if (mask.pixels[qi] != 0 && labels[qi] == 0) {
                    labels[qi] = next;
                    queue.push_back(qi);
                }
            }
        }
    }
    return next;
}

} // namespace

WeightMap weight_map(const MaskImage& truth, const WeightMapParams& params) {
    if (truth.width < 1 || truth.height < 1) throw InvalidArgument("weight_map: empty mask");
    if (!(params.sigma > 0) || params.w0 < 0)
        throw InvalidArgument("weight_map: sigma must be positive and w0 nonnegative");
    if (params.class_weights.size() < 2 ||
        params.class_weights[0] <= 0 || params.class_weights[1] <= 0)
        throw InvalidArgument("weight_map: need positive class weights for both classes");

    WeightMap map;
    map.width = truth.width;
    map.height = truth.height;
    map.values.resize(truth.pixels.size());
    for (std::size_t i = 0; i < truth.pixels.size(); ++i)
        map.values[i] = params.class_weights[truth.pixels[i] ? 1 : 0];

    std::vector<int> labels;
    const int num_components = label_components(truth, labels);
    if (num_components < 2 || params.w0 == 0.0) return map; // exponential term vanishes

    const std::size_t n = truth.pixels.size();
    std::vector<double> d1(n, kInf), d2(n, kInf);
    std::vector<double> grid(n);
    for (int comp = 1; comp <= num_components; ++comp) {
        for (std::size_t i = 0; i < n; ++i) grid[i] = labels[i] == comp ? 0.0 : kFar;
        edt_squared(grid, truth.width, truth.height);
        for (std::size_t i = 0; i < n; ++i) {
            const double dist = std::sqrt(grid[i]);
            if (dist < d1[i]) {
                d2[i] = d1[i];
                d1[i] = dist;
            } else if (dist < d2[i]) {
                d2[i] = dist;
            }
        }
    }

    const double denom = 2.0 * params.sigma * params.sigma;
    for (std::size_t i = 0; i < n; ++i) {
        const double sum = d1[i] + d2[i];
        map.values[i] += params.w0 * std::exp(-(sum * sum) / denom);
    }
    return map;
}

// ---- loss ----

LossReport weighted_xent(const Tensor4& probs, const std::vector<MaskImage>& truth,
                         const std::vector<WeightMap>& weights) {
    if (static_cast<int>(truth.size()) != probs.n || truth.size() != weights.size())
        throw InvalidArgument("weighted_xent: batch size mismatch");
    LossReport report;
    report.per_pixel.reserve(probs.data.size() / probs.c);
    for (int i = 0; i < probs.n; ++i) {
        const MaskImage& m = truth[i];
        const WeightMap& w = weights[i];
        if (m.width != probs.w || m.height != probs.h || w.width != probs.w ||
            w.height != probs.h)
            throw InvalidArgument("weighted_xent: dimension mismatch");
        for (int y = 0; y < probs.h; ++y) {
            for (int x = 0; x < probs.w; ++x) {
                const int cls = m.at(x, y) ? 1 : 0;
                const double p = std::max(probs.at(i, cls, y, x), 1e-12);
                const double contrib = -w.at(x, y) * std::log(p);
                report.per_pixel.push_back(contrib);
                report.total += contrib;
            }
        }
    }
    return report;
}

LossReport weighted_xent(const Tensor4& probs, const MaskImage& truth, const WeightMap& weights) {
    return weighted_xent(probs, std::vector<MaskImage>{truth}, std::vector<WeightMap>{weights});
}

// ---- backward ----

namespace {

struct GradAccumulator {
    std::vector<std::vector<double>> w, b;

    explicit GradAccumulator(const SegNet& net) {
        w.resize(net.layers.size());
        b.resize(net.layers.size());
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            w[i].assign(net.layers[i].weights.size(), 0.0);
            b[i].assign(net.layers[i].bias.size(), 0.0);
        }
    }

    std::vector<double> flatten() const {
        std::vector<double> out;
        for (std::size_t i = 0; i < w.size(); ++i) {
            out.insert(out.end(), w[i].begin(), w[i].end());
            out.insert(out.end(), b[i].begin(), b[i].end());
        }
        return out;
    }
};

// gradients of the summed loss E; also reports E itself
double backward_impl(const SegNet& net, const Tensor4& batch, const std::vector<MaskImage>& truth,
                     const std::vector<WeightMap>& weights, GradAccumulator& grads) {
    Trace t;
    forward_impl(net, batch, &t);
    const LossReport report = weighted_xent(t.probs, truth, weights);

    const int d = net.config.depth;
    // dE/dlogit_c = w (p_c - [c == truth])
    Tensor4 dlogits(t.logits.n, t.logits.c, t.logits.h, t.logits.w);
    for (int i = 0; i < dlogits.n; ++i)
        for (int y = 0; y < dlogits.h; ++y)
            for (int x = 0; x < dlogits.w; ++x) {
                const int cls = truth[i].at(x, y) ? 1 : 0;
                const double wv = weights[i].at(x, y);
                for (int ci = 0; ci < dlogits.c; ++ci) {
                    const double p = t.probs.at(i, ci, y, x);
                    dlogits.at(i, ci, y, x) = wv * (p - (ci == cls ? 1.0 : 0.0));
                }
            }

    std::size_t li = net.layers.size();
    const std::size_t head_idx = --li;
    const Tensor4& head_in = d > 0 ? t.dec_act2[d - 1] : t.bott_act2;
    Tensor4 dcur(head_in.n, head_in.c, head_in.h, head_in.w);
    conv_backward(net.layers[head_idx], head_in, dlogits, &dcur, grads.w[head_idx],
                  grads.b[head_idx]);

    // encoder activation gradients accumulate skip contributions here
    std::vector<Tensor4> denc_act2(d);
    for (int i = 0; i < d; ++i)
        denc_act2[i] =
            Tensor4(t.enc_act2[i].n, t.enc_act2[i].c, t.enc_act2[i].h, t.enc_act2[i].w);

    // decoder blocks, shallowest first (reverse of the forward order)
    for (int s = d - 1; s >= 0; --s) {
        const int level = d - 1 - s;
        const std::size_t c2_idx = --li;
        const std::size_t c1_idx = --li;
        const std::size_t up_idx = --li;

        relu_backward_inplace(dcur, t.dec_pre2[s]);
        Tensor4 ddec1(t.dec_act1[s].n, t.dec_act1[s].c, t.dec_act1[s].h, t.dec_act1[s].w);
        conv_backward(net.layers[c2_idx], t.dec_act1[s], dcur, &ddec1, grads.w[c2_idx],
                      grads.b[c2_idx]);

        relu_backward_inplace(ddec1, t.dec_pre1[s]);
        Tensor4 dcat(t.cat[s].n, t.cat[s].c, t.cat[s].h, t.cat[s].w);
        conv_backward(net.layers[c1_idx], t.cat[s], ddec1, &dcat, grads.w[c1_idx],
                      grads.b[c1_idx]);

        // split the concat gradient: up path plus halved skip path
        const int up_ch = t.up_act[s].c;
        const int skip = t.cat[s].c - up_ch;
        Tensor4 dup(dcat.n, up_ch, dcat.h, dcat.w);
        const std::size_t plane = static_cast<std::size_t>(dcat.h) * dcat.w;
        for (int i = 0; i < dcat.n; ++i) {
            for (int ci = 0; ci < up_ch; ++ci)
                std::copy_n(dcat.plane(i, ci), plane, dup.plane(i, ci));
            for (int ci = 0; ci < skip; ++ci) {
                const double* src = dcat.plane(i, up_ch + ci);
                double* dst = denc_act2[level].plane(i, ci);
                for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
            }
        }

        relu_backward_inplace(dup, t.up_pre[s]);
        Tensor4 dupsampled(t.upsampled[s].n, t.upsampled[s].c, t.upsampled[s].h,
                           t.upsampled[s].w);
        conv_backward(net.layers[up_idx], t.upsampled[s], dup, &dupsampled, grads.w[up_idx],
                      grads.b[up_idx]);
        dcur = upsample2_backward(dupsampled);
    }

    // bottleneck
    {
        const std::size_t b2_idx = --li;
        const std::size_t b1_idx = --li;
        relu_backward_inplace(dcur, t.bott_pre2);
        Tensor4 dbott1(t.bott_act1.n, t.bott_act1.c, t.bott_act1.h, t.bott_act1.w);
        conv_backward(net.layers[b2_idx], t.bott_act1, dcur, &dbott1, grads.w[b2_idx],
                      grads.b[b2_idx]);
        relu_backward_inplace(dbott1, t.bott_pre1);
        const Tensor4& bott_in = d > 0 ? t.pooled[d - 1] : batch;
        dcur = Tensor4(bott_in.n, bott_in.c, bott_in.h, bott_in.w);
        conv_backward(net.layers[b1_idx], bott_in, dbott1, &dcur, grads.w[b1_idx],
                      grads.b[b1_idx]);
    }

    // encoder levels, deepest first; dcur holds the pooled-output gradient
    for (int i = d - 1; i >= 0; --i) {
        const std::size_t c2_idx = 2 * static_cast<std::size_t>(i) + 1;
        const std::size_t c1_idx = 2 * static_cast<std::size_t>(i);

        maxpool2_backward(dcur, t.pool_argmax[i], denc_act2[i]);
        relu_backward_inplace(denc_act2[i], t.enc_pre2[i]);
        Tensor4 denc1(t.enc_act1[i].n, t.enc_act1[i].c, t.enc_act1[i].h, t.enc_act1[i].w);
        conv_backward(net.layers[c2_idx], t.enc_act1[i], denc_act2[i], &denc1, grads.w[c2_idx],
                      grads.b[c2_idx]);

        relu_backward_inplace(denc1, t.enc_pre1[i]);
        const Tensor4& level_in = i > 0 ? t.pooled[i - 1] : batch;
        if (i > 0) {
            dcur = Tensor4(level_in.n, level_in.c, level_in.h, level_in.w);
            conv_backward(net.layers[c1_idx], level_in, denc1, &dcur, grads.w[c1_idx],
                          grads.b[c1_idx]);
        } else {
            conv_backward(net.layers[c1_idx], level_in, denc1, nullptr, grads.w[c1_idx],
                          grads.b[c1_idx]);
        }
    }

    return report.total;
}

} // namespace

std::vector<double> backward(const SegNet& net, const Tensor4& batch,
                             const std::vector<MaskImage>& truth,
                             const std::vector<WeightMap>& weights) {
    GradAccumulator grads(net);
    backward_impl(net, batch, truth, weights, grads);
    return grads.flatten();
}

// ---- training ----

TrainResult train(SegNet& net, const std::vector<std::pair<GrayImage, MaskImage>>& data,
                  const TrainOptions& options) {
    if (data.empty()) throw InvalidArgument("train: empty dataset");
    if (options.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
    const int div = 1 << net.config.depth;
    for (const auto& [img, mask] : data) {
        if (img.width != mask.width || img.height != mask.height)
            throw InvalidArgument("train: image/mask dimension mismatch");
        if (img.width % div != 0 || img.height % div != 0)
            throw InvalidArgument("train: patch dims must be divisible by 2^depth");
    }

    TrainResult result;
    WeightMapParams wparams = options.weight_params;
    if (wparams.class_weights.empty()) {
        // inverse class-frequency weights from the training masks, mean 1
        std::int64_t fg = 0, total = 0;
        for (const auto& [img, mask] : data) {
            total += static_cast<std::int64_t>(mask.pixels.size());
            for (auto p : mask.pixels) fg += p ? 1 : 0;
        }
        const double freq_fg = std::max<std::int64_t>(fg, 1) / static_cast<double>(total);
        const double freq_bg = std::max<std::int64_t>(total - fg, 1) / static_cast<double>(total);
        double wb = 1.0 / freq_bg, wf = 1.0 / freq_fg;
        const double mean = (wb + wf) / 2.0;
        wparams.class_weights = {wb / mean, wf / mean};
    }
    result.class_weights = wparams.class_weights;

    std::vector<WeightMap> maps(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) maps[i] = weight_map(data[i].second, wparams);

    const Rng base(options.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    const int half = (options.epochs + 1) / 2;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        Rng shuffler = base.derive("epoch", static_cast<std::uint64_t>(epoch));
        shuffler.shuffle(order);
        const double lr = epoch < half ? options.lr_initial : options.lr_final;

        double epoch_loss = 0.0;
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const auto& [img, mask] = data[order[oi]];
            Tensor4 batch(1, 1, img.height, img.width);
            std::copy(img.pixels.begin(), img.pixels.end(), batch.data.begin());

            GradAccumulator grads(net);
            const double loss = backward_impl(net, batch, {mask}, {maps[order[oi]]}, grads);
            const double scale = 1.0 / (static_cast<double>(img.width) * img.height);
            if (!std::isfinite(loss))
                throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                            ", sample " + std::to_string(order[oi]));
            epoch_loss += loss * scale;

            // step on the mean per-pixel loss
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                ConvLayer& layer = net.layers[l];
                for (std::size_t k = 0; k < layer.weights.size(); ++k)
                    layer.weights[k] -= lr * scale * grads.w[l][k];
                for (std::size_t k = 0; k < layer.bias.size(); ++k)
                    layer.bias[k] -= lr * scale * grads.b[l][k];
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
    }
    return result;
}

// ---- inference ----

std::pair<MaskImage, GrayImage> predict_mask(const SegNet& net, const GrayImage& img) {
    const int div = 1 << net.config.depth;
    const int ph = (img.height + div - 1) / div * div;
    const int pw = (img.width + div - 1) / div * div;

    Tensor4 batch(1, 1, ph, pw);
    for (int y = 0; y < ph; ++y) {
        // reflect right/bottom overhang back into the image
        int sy = y < img.height ? y : 2 * img.height - 2 - y;
        sy = std::clamp(sy, 0, img.height - 1);
        for (int x = 0; x < pw; ++x) {
            int sx = x < img.width ? x : 2 * img.width - 2 - x;
            sx = std::clamp(sx, 0, img.width - 1);
            batch.at(0, 0, y, x) = img.at(sx, sy);
        }
    }

    const Tensor4 probs = forward(net, batch);
    MaskImage mask(img.width, img.height);
    GrayImage prob_map(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double p = probs.at(0, 1, y, x);
            prob_map.at(x, y) = p;
            mask.at(x, y) = p > 0.5 ? 1 : 0; // exact ties go to background
        }
    return {std::move(mask), std::move(prob_map)};
}

void save(const SegNet& net, const std::filesystem::path& path, std::uint64_t seed, int epochs) {
    io::ModelWriter w("segnet", 1);
    w.header()["depth"] = net.config.depth;
    w.header()["base_channels"] = net.config.base_channels;
    w.header()["in_channels"] = net.config.in_channels;
    w.header()["num_classes"] = net.config.num_classes;
    w.header()["seed"] = seed;
    w.header()["epochs"] = epochs;
    w.header()["param_count"] = net.param_count();
    w.add_f32("params", net.flatten_params());
    w.save(path);
}

SegNet load(const std::filesystem::path& path) {
    auto r = io::ModelReader::open(path, "segnet", 1);
    SegNetConfig cfg;
    cfg.depth = r.header().at("depth").get<int>();
    cfg.base_channels = r.header().at("base_channels").get<int>();
    cfg.in_channels = r.header().at("in_channels").get<int>();
    cfg.num_classes = r.header().at("num_classes").get<int>();
    SegNet net = SegNet::make(cfg);
    const std::vector<double> params = r.read_f32("params");
    if (params.size() != net.param_count())
        throw IoError("segnet model '" + path.string() + "' has a wrong parameter count");
    net.set_params(params);
    return net;
}

SegEvaluation evaluate(const SegNet& net,
                       const std::vector<std::pair<GrayImage, MaskImage>>& pairs) {
    if (pairs.empty()) throw InvalidArgument("evaluate: empty dataset");
    SegEvaluation out;
    out.images = static_cast<int>(pairs.size());
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& [img, truth] : pairs) {
        const auto [mask, prob] = predict_mask(net, img);
        out.mean_jaccard += metrics::jaccard(mask, truth);
        for (std::size_t i = 0; i < prob.pixel_count(); ++i) {
            scores.push_back(prob.pixels[i]);
            labels.push_back(truth.pixels[i] ? 1 : 0);
        }
    }
    out.mean_jaccard /= static_cast<double>(pairs.size());
    out.roc = metrics::roc_auc(scores, labels);
    out.pr = metrics::pr_auc(scores, labels);
    return out;
}

} // namespace retina::seg
