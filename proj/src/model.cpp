#include "qf/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "qf/rng.hpp"
#include "json.hpp"

namespace qf {

namespace {

void check_arch(const ForecasterParams& p) {
    const auto& a = p.arch;
    if (a.num_layers < 1 || a.hidden_size < 1 || a.lag_steps < 1)
        throw std::invalid_argument("forecaster: architecture fields must be positive");
    if (static_cast<int>(p.layers.size()) != a.num_layers)
        throw std::invalid_argument("forecaster: layer count does not match architecture");
    for (int k = 0; k < a.num_layers; ++k) {
        const int want_in = k == 0 ? 2 : a.hidden_size;
        if (p.layers[k].input_dim() != want_in || p.layers[k].hidden_size() != a.hidden_size)
            throw std::invalid_argument("forecaster: layer " + std::to_string(k) +
                                        " has unexpected shape");
    }
    if (p.head.input_dim() != a.hidden_size || p.head.output_dim() != 1)
        throw std::invalid_argument("forecaster: head shape does not match architecture");
}

void check_window(const ForecasterParams& p, std::span<const double> window) {
    if (static_cast<int>(window.size()) != p.arch.lag_steps)
        throw std::invalid_argument("forward: window length " + std::to_string(window.size()) +
                                    " != lag " + std::to_string(p.arch.lag_steps));
    for (double v : window)
        if (!std::isfinite(v))
            throw std::invalid_argument(
                "forward: window contains a missing or non-finite entry; impute before calling");
}

void check_levels(std::span<const double> levels) {
    if (levels.empty()) throw std::invalid_argument("forward: empty quantile level set");
    for (double q : levels)
        if (!(q > 0.0 && q < 1.0))
            throw std::invalid_argument("forward: quantile level " + std::to_string(q) +
                                        " outside (0, 1)");
}

}  // namespace

ForecasterParams ForecasterParams::zeros(const ModelArch& arch) {
    ForecasterParams p;
    p.arch = arch;
    p.layers.reserve(arch.num_layers);
    for (int k = 0; k < arch.num_layers; ++k)
        p.layers.push_back(LstmLayerParams::zeros(k == 0 ? 2 : arch.hidden_size, arch.hidden_size));
    p.head = DenseParams::zeros(1, arch.hidden_size);
    return p;
}

ForecasterParams ForecasterParams::init(const ModelArch& arch, std::uint64_t seed) {
    ForecasterParams p = zeros(arch);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.hidden_size));
    visit_tensors(p, [&](double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) data[i] = uniform_in(rng, -bound, bound);
    });
    for (auto& layer : p.layers)
        for (double& b : layer.b_f) b += 1.0;
    return p;
}

void visit_tensors(ForecasterParams& p, const std::function<void(double*, std::size_t)>& fn) {
    for (auto& l : p.layers) {
        for (Mat* m : {&l.w_ix, &l.w_ih, &l.w_ic}) fn(m->a.data(), m->a.size());
        fn(l.b_i.data(), l.b_i.size());
        for (Mat* m : {&l.w_fx, &l.w_fh, &l.w_fc}) fn(m->a.data(), m->a.size());
        fn(l.b_f.data(), l.b_f.size());
        for (Mat* m : {&l.w_cx, &l.w_ch}) fn(m->a.data(), m->a.size());
        fn(l.b_c.data(), l.b_c.size());
        for (Mat* m : {&l.w_ox, &l.w_oh, &l.w_oc}) fn(m->a.data(), m->a.size());
        fn(l.b_o.data(), l.b_o.size());
    }
    fn(p.head.weight.a.data(), p.head.weight.a.size());
    fn(p.head.bias.data(), p.head.bias.size());
}

void visit_tensors(const ForecasterParams& p,
                   const std::function<void(const double*, std::size_t)>& fn) {
    visit_tensors(const_cast<ForecasterParams&>(p),
                  [&](double* d, std::size_t n) { fn(d, n); });
}

std::size_t param_count(const ForecasterParams& p) {
    std::size_t n = 0;
    visit_tensors(p, [&](const double*, std::size_t k) { n += k; });
    return n;
}

Vec flatten(const ForecasterParams& p) {
    Vec out;
    out.reserve(param_count(p));
    visit_tensors(p, [&](const double* d, std::size_t n) { out.insert(out.end(), d, d + n); });
    return out;
}

void assign_flat(ForecasterParams& p, std::span<const double> flat) {
    if (flat.size() != param_count(p))
        throw std::invalid_argument("assign_flat: length mismatch");
    std::size_t off = 0;
    visit_tensors(p, [&](double* d, std::size_t n) {
        std::copy(flat.begin() + off, flat.begin() + off + n, d);
        off += n;
    });
}

double QuantileFan::value_at(double level) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] == level || std::abs(levels[i] - level) < 1e-12) return values[i];
    throw std::invalid_argument("QuantileFan: level " + std::to_string(level) + " not in fan");
}

void QuantileFan::monotonize() { std::sort(values.begin(), values.end()); }

Vec forward_window(const ForecasterParams& p, std::span<const double> window,
                   std::span<const double> levels, WindowTrace* trace) {
    check_arch(p);
    check_window(p, window);
    check_levels(levels);

    const int nl = p.arch.num_layers;
    const int hsz = p.arch.hidden_size;
    const int lag = p.arch.lag_steps;
    const int a = static_cast<int>(levels.size());

    if (trace) {
        trace->steps.assign(lag, std::vector<LstmStepTrace>(nl));
        trace->levels.assign(levels.begin(), levels.end());
    }

    std::vector<Mat> hs(nl), cs(nl);
    for (int k = 0; k < nl; ++k) {
        hs[k].resize(hsz, a);
        cs[k].resize(hsz, a);
    }

    Mat x1(2, a);
    Mat stream, h_new, c_new;
    for (int step = 0; step < lag; ++step) {
        for (int j = 0; j < a; ++j) {
            x1(0, j) = window[step];
            x1(1, j) = levels[j];
        }
        lstm_step_block(p.layers[0], x1, hs[0], cs[0], h_new, c_new,
                        trace ? &trace->steps[step][0] : nullptr);
        std::swap(hs[0], h_new);
        std::swap(cs[0], c_new);
        stream = hs[0];
        for (int k = 1; k < nl; ++k) {
            lstm_step_block(p.layers[k], stream, hs[k], cs[k], h_new, c_new,
                            trace ? &trace->steps[step][k] : nullptr);
            std::swap(hs[k], h_new);
            std::swap(cs[k], c_new);
            // identity skip around every layer past the first
            for (std::size_t idx = 0; idx < stream.a.size(); ++idx) stream.a[idx] += hs[k].a[idx];
        }
    }

    if (trace) trace->head_in = stream;
    Mat out;
    dense_forward_block(p.head, stream, out);
    return out.a;
}

Vec backward_window(const ForecasterParams& p, const WindowTrace& trace,
                    std::span<const double> out_grads, ForecasterParams& grads) {
    check_arch(p);
    const int nl = p.arch.num_layers;
    const int hsz = p.arch.hidden_size;
    const int lag = p.arch.lag_steps;
    const int a = static_cast<int>(trace.levels.size());
    if (static_cast<int>(out_grads.size()) != a)
        throw std::invalid_argument("backward_window: out_grads length != traced level count");
    if (static_cast<int>(trace.steps.size()) != lag)
        throw std::invalid_argument("backward_window: trace step count mismatch");

    Mat dout(1, a);
    for (int j = 0; j < a; ++j) dout(0, j) = out_grads[j];
    Mat dstream_head;
    dense_backward_block(p.head, trace.head_in, dout, grads.head, dstream_head);

    std::vector<Mat> dh_next(nl), dc_next(nl);
    for (int k = 0; k < nl; ++k) {
        dh_next[k].resize(hsz, a);
        dc_next[k].resize(hsz, a);
    }

    Vec window_grad(lag, 0.0);
    Mat g, dh_total, dx, dh_prev, dc_prev;
    for (int step = lag - 1; step >= 0; --step) {
        if (step == lag - 1)
            g = dstream_head;
        else {
            g.resize(hsz, a);  // residual stream is only consumed at the final step
        }
        for (int k = nl - 1; k >= 0; --k) {
            // h of every layer feeds the stream additively (layer 1 directly,
            // deeper layers via the skip sum), so its gradient starts from g
            dh_total = g;
            for (std::size_t idx = 0; idx < dh_total.a.size(); ++idx)
                dh_total.a[idx] += dh_next[k].a[idx];
            lstm_step_block_backward(p.layers[k], trace.steps[step][k], dh_total, dc_next[k],
                                     grads.layers[k], dx, dh_prev, dc_prev);
            dh_next[k] = dh_prev;
            dc_next[k] = dc_prev;
            if (k > 0) {
                for (std::size_t idx = 0; idx < g.a.size(); ++idx) g.a[idx] += dx.a[idx];
            } else {
                double s = 0.0;
                for (int j = 0; j < a; ++j) s += dx(0, j);
                window_grad[step] = s;
            }
        }
    }
    return window_grad;
}

ForwardResult forward(const ForecasterParams& p, std::span<const double> window, double alpha) {
    const double levels[1] = {alpha};
    WindowTrace trace;
    Vec out = forward_window(p, window, levels, &trace);
    ForwardResult res;
    res.value = out[0];
    res.final_hidden.resize(p.arch.num_layers);
    const auto& last = trace.steps.back();
    for (int k = 0; k < p.arch.num_layers; ++k) {
        const auto& t = last[k];
        Vec h(t.gate_o.a.size());
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = t.gate_o.a[i] * t.tanh_c.a[i];
        res.final_hidden[k] = std::move(h);
    }
    return res;
}

QuantileFan forecast_fan(const ForecasterParams& p, std::span<const double> window,
                         std::span<const double> levels) {
    check_levels(levels);
    Vec sorted(levels.begin(), levels.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] == sorted[i - 1])
            throw std::invalid_argument("forecast_fan: duplicate quantile level");
    QuantileFan fan;
    fan.levels = sorted;
    fan.values = forward_window(p, window, sorted);
    fan.monotonize();
    return fan;
}

double median_forecast(const ForecasterParams& p, std::span<const double> window) {
    const double levels[1] = {0.5};
    return forward_window(p, window, levels)[0];
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.a}};
}

Mat mat_from_json(const json& j) {
    Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (data.size() != m.a.size()) throw std::runtime_error("checkpoint: tensor size mismatch");
    m.a = data.get<Vec>();
    return m;
}

json layer_to_json(const LstmLayerParams& l) {
    return json{{"w_ix", mat_to_json(l.w_ix)}, {"w_ih", mat_to_json(l.w_ih)},
                {"w_ic", mat_to_json(l.w_ic)}, {"b_i", l.b_i},
                {"w_fx", mat_to_json(l.w_fx)}, {"w_fh", mat_to_json(l.w_fh)},
                {"w_fc", mat_to_json(l.w_fc)}, {"b_f", l.b_f},
                {"w_cx", mat_to_json(l.w_cx)}, {"w_ch", mat_to_json(l.w_ch)},
                {"b_c", l.b_c},                {"w_ox", mat_to_json(l.w_ox)},
                {"w_oh", mat_to_json(l.w_oh)}, {"w_oc", mat_to_json(l.w_oc)},
                {"b_o", l.b_o}};
}

LstmLayerParams layer_from_json(const json& j) {
    LstmLayerParams l;
    l.w_ix = mat_from_json(j.at("w_ix"));
    l.w_ih = mat_from_json(j.at("w_ih"));
    l.w_ic = mat_from_json(j.at("w_ic"));
    l.b_i = j.at("b_i").get<Vec>();
    l.w_fx = mat_from_json(j.at("w_fx"));
    l.w_fh = mat_from_json(j.at("w_fh"));
    l.w_fc = mat_from_json(j.at("w_fc"));
    l.b_f = j.at("b_f").get<Vec>();
    l.w_cx = mat_from_json(j.at("w_cx"));
    l.w_ch = mat_from_json(j.at("w_ch"));
    l.b_c = j.at("b_c").get<Vec>();
    l.w_ox = mat_from_json(j.at("w_ox"));
    l.w_oh = mat_from_json(j.at("w_oh"));
    l.w_oc = mat_from_json(j.at("w_oc"));
    l.b_o = j.at("b_o").get<Vec>();
    return l;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    check_arch(ckpt.params);
    json j;
    j["format"] = "qforecast-checkpoint";
    j["version"] = 1;
    j["arch"] = {{"num_layers", ckpt.params.arch.num_layers},
                 {"hidden_size", ckpt.params.arch.hidden_size},
                 {"lag_steps", ckpt.params.arch.lag_steps}};
    j["quantile_levels"] = ckpt.quantile_levels;
    j["normalization"] = {{"min", ckpt.norm.lo}, {"max", ckpt.norm.hi}};
    json layers = json::array();
    for (const auto& l : ckpt.params.layers) layers.push_back(layer_to_json(l));
    j["layers"] = std::move(layers);
    j["head"] = {{"weight", mat_to_json(ckpt.params.head.weight)}, {"bias", ckpt.params.head.bias}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out << j.dump(1);
    out << '\n';
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_checkpoint: " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "qforecast-checkpoint")
        throw std::runtime_error("load_checkpoint: " + path.string() + " is not a checkpoint file");
    if (j.value("version", 0) != 1)
        throw std::runtime_error("load_checkpoint: unsupported checkpoint version");

    Checkpoint ckpt;
    ckpt.params.arch.num_layers = j.at("arch").at("num_layers").get<int>();
    ckpt.params.arch.hidden_size = j.at("arch").at("hidden_size").get<int>();
    ckpt.params.arch.lag_steps = j.at("arch").at("lag_steps").get<int>();
    ckpt.quantile_levels = j.at("quantile_levels").get<Vec>();
    ckpt.norm.lo = j.at("normalization").at("min").get<double>();
    ckpt.norm.hi = j.at("normalization").at("max").get<double>();
    for (const auto& lj : j.at("layers")) ckpt.params.layers.push_back(layer_from_json(lj));
    ckpt.params.head.weight = mat_from_json(j.at("head").at("weight"));
    ckpt.params.head.bias = j.at("head").at("bias").get<Vec>();
    check_arch(ckpt.params);
    return ckpt;
}

}  // namespace qf
