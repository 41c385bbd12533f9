#include "qf/numkernel.hpp"

#include <cmath>
#include <string>

namespace qf {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply_sigmoid(Mat& m) {
    for (double& v : m.a) v = sigmoid(v);
}

void apply_tanh(Mat& m) {
    for (double& v : m.a) v = std::tanh(v);
}

Mat gate_preact(const Mat& wx, const Mat& wh, const Mat* wc, const Vec& b, const Mat& x,
                const Mat& h_prev, const Mat& c_prev) {
    Mat pre(wx.rows, x.cols);
    gemm_acc(pre, wx, x);
    gemm_acc(pre, wh, h_prev);
    if (wc) gemm_acc(pre, *wc, c_prev);
    add_bias(pre, b);
    return pre;
}

Mat from_vec(const Vec& v) { return Mat(static_cast<int>(v.size()), 1, v); }

Vec to_vec(const Mat& m) { return m.a; }

}  // namespace

LstmLayerParams LstmLayerParams::zeros(int input_dim, int hidden_size) {
    LstmLayerParams p;
    const int h = hidden_size, d = input_dim;
    p.w_ix.resize(h, d);
    p.w_ih.resize(h, h);
    p.w_ic.resize(h, h);
    p.b_i.assign(h, 0.0);
    p.w_fx.resize(h, d);
    p.w_fh.resize(h, h);
    p.w_fc.resize(h, h);
    p.b_f.assign(h, 0.0);
    p.w_cx.resize(h, d);
    p.w_ch.resize(h, h);
    p.b_c.assign(h, 0.0);
    p.w_ox.resize(h, d);
    p.w_oh.resize(h, h);
    p.w_oc.resize(h, h);
    p.b_o.assign(h, 0.0);
    return p;
}

DenseParams DenseParams::zeros(int out_dim, int in_dim) {
    DenseParams p;
    p.weight.resize(out_dim, in_dim);
    p.bias.assign(out_dim, 0.0);
    return p;
}

bool LstmStepTrace::valid(int input_dim, int hidden_size) const {
    const int a = x.cols;
    if (a <= 0) return false;
    auto ok = [&](const Mat& m, int r) { return m.rows == r && m.cols == a; };
    return ok(x, input_dim) && ok(h_prev, hidden_size) && ok(c_prev, hidden_size) &&
           ok(gate_i, hidden_size) && ok(gate_f, hidden_size) && ok(cand, hidden_size) &&
           ok(gate_o, hidden_size) && ok(c, hidden_size) && ok(tanh_c, hidden_size);
}

void lstm_step_block(const LstmLayerParams& p, const Mat& x, const Mat& h_prev, const Mat& c_prev,
                     Mat& h_out, Mat& c_out, LstmStepTrace* trace) {
    const int hsz = p.hidden_size();
    const int a = x.cols;
    check_shape(x, p.input_dim(), a, "lstm_step: input");
    check_shape(h_prev, hsz, a, "lstm_step: previous hidden state");
    check_shape(c_prev, hsz, a, "lstm_step: previous cell state");

    Mat gi = gate_preact(p.w_ix, p.w_ih, &p.w_ic, p.b_i, x, h_prev, c_prev);
    apply_sigmoid(gi);
    Mat gf = gate_preact(p.w_fx, p.w_fh, &p.w_fc, p.b_f, x, h_prev, c_prev);
    apply_sigmoid(gf);
    Mat cand = gate_preact(p.w_cx, p.w_ch, nullptr, p.b_c, x, h_prev, c_prev);
    apply_tanh(cand);
    Mat go = gate_preact(p.w_ox, p.w_oh, &p.w_oc, p.b_o, x, h_prev, c_prev);
    apply_sigmoid(go);

    c_out.resize(hsz, a);
    for (std::size_t k = 0; k < c_out.a.size(); ++k)
        c_out.a[k] = gf.a[k] * c_prev.a[k] + gi.a[k] * cand.a[k];

    Mat tc = c_out;
    apply_tanh(tc);
    h_out.resize(hsz, a);
    for (std::size_t k = 0; k < h_out.a.size(); ++k) h_out.a[k] = go.a[k] * tc.a[k];

    if (trace) {
        trace->x = x;
        trace->h_prev = h_prev;
        trace->c_prev = c_prev;
        trace->gate_i = std::move(gi);
        trace->gate_f = std::move(gf);
        trace->cand = std::move(cand);
        trace->gate_o = std::move(go);
        trace->c = c_out;
        trace->tanh_c = std::move(tc);
    }
}

void lstm_step_block_backward(const LstmLayerParams& p, const LstmStepTrace& t, const Mat& dh,
                              const Mat& dc_in, LstmLayerParams& grads, Mat& dx, Mat& dh_prev,
                              Mat& dc_prev) {
    const int hsz = p.hidden_size();
    if (!t.valid(p.input_dim(), hsz))
        throw std::invalid_argument("lstm_step_backward: trace missing or shape mismatch");
    const int a = t.x.cols;
    check_shape(dh, hsz, a, "lstm_step_backward: dh");
    check_shape(dc_in, hsz, a, "lstm_step_backward: dc");

    Mat dpre_o(hsz, a), dpre_i(hsz, a), dpre_f(hsz, a), dpre_g(hsz, a);
    dc_prev.resize(hsz, a);
    for (std::size_t k = 0; k < dh.a.size(); ++k) {
        const double o = t.gate_o.a[k], i = t.gate_i.a[k], f = t.gate_f.a[k];
        const double g = t.cand.a[k], tc = t.tanh_c.a[k], cp = t.c_prev.a[k];
        const double dhv = dh.a[k];
        const double dc = dc_in.a[k] + dhv * o * (1.0 - tc * tc);
        dpre_o.a[k] = dhv * tc * o * (1.0 - o);
        dpre_i.a[k] = dc * g * i * (1.0 - i);
        dpre_f.a[k] = dc * cp * f * (1.0 - f);
        dpre_g.a[k] = dc * i * (1.0 - g * g);
        dc_prev.a[k] = dc * f;
    }

    // Parameter gradients: dW += dpre * input^T, db += row sums of dpre.
    gemm_acc_nt(grads.w_ix, dpre_i, t.x);
    gemm_acc_nt(grads.w_ih, dpre_i, t.h_prev);
    gemm_acc_nt(grads.w_ic, dpre_i, t.c_prev);
    gemm_acc_nt(grads.w_fx, dpre_f, t.x);
    gemm_acc_nt(grads.w_fh, dpre_f, t.h_prev);
    gemm_acc_nt(grads.w_fc, dpre_f, t.c_prev);
    gemm_acc_nt(grads.w_cx, dpre_g, t.x);
    gemm_acc_nt(grads.w_ch, dpre_g, t.h_prev);
    gemm_acc_nt(grads.w_ox, dpre_o, t.x);
    gemm_acc_nt(grads.w_oh, dpre_o, t.h_prev);
    gemm_acc_nt(grads.w_oc, dpre_o, t.c_prev);
    for (int r = 0; r < hsz; ++r) {
        double si = 0, sf = 0, sg = 0, so = 0;
        for (int j = 0; j < a; ++j) {
            si += dpre_i(r, j);
            sf += dpre_f(r, j);
            sg += dpre_g(r, j);
            so += dpre_o(r, j);
        }
        grads.b_i[r] += si;
        grads.b_f[r] += sf;
        grads.b_c[r] += sg;
        grads.b_o[r] += so;
    }

    // Input-side gradients: dX += W^T * dpre.
    dx.resize(p.input_dim(), a);
    gemm_acc_tn(dx, p.w_ix, dpre_i);
    gemm_acc_tn(dx, p.w_fx, dpre_f);
    gemm_acc_tn(dx, p.w_cx, dpre_g);
    gemm_acc_tn(dx, p.w_ox, dpre_o);

    dh_prev.resize(hsz, a);
    gemm_acc_tn(dh_prev, p.w_ih, dpre_i);
    gemm_acc_tn(dh_prev, p.w_fh, dpre_f);
    gemm_acc_tn(dh_prev, p.w_ch, dpre_g);
    gemm_acc_tn(dh_prev, p.w_oh, dpre_o);

    gemm_acc_tn(dc_prev, p.w_ic, dpre_i);
    gemm_acc_tn(dc_prev, p.w_fc, dpre_f);
    gemm_acc_tn(dc_prev, p.w_oc, dpre_o);
}

LayerState lstm_step(const LstmLayerParams& p, const Vec& input, const LayerState& prev,
                     LstmStepTrace* trace) {
    if (static_cast<int>(input.size()) != p.input_dim())
        throw std::invalid_argument("lstm_step: input length " + std::to_string(input.size()) +
                                    " != layer input dim " + std::to_string(p.input_dim()));
    if (prev.h.size() != prev.c.size() ||
        static_cast<int>(prev.h.size()) != p.hidden_size())
        throw std::invalid_argument("lstm_step: state length != hidden size");
    Mat h, c;
    lstm_step_block(p, from_vec(input), from_vec(prev.h), from_vec(prev.c), h, c, trace);
    return LayerState{to_vec(h), to_vec(c)};
}

LstmStepGradients lstm_step_backward(const LstmLayerParams& p, const LstmStepTrace& trace,
                                     const Vec& grad_h, const Vec& grad_c) {
    LstmStepGradients out;
    out.params = LstmLayerParams::zeros(p.input_dim(), p.hidden_size());
    Mat dx, dhp, dcp;
    lstm_step_block_backward(p, trace, from_vec(grad_h), from_vec(grad_c), out.params, dx, dhp,
                             dcp);
    out.input = to_vec(dx);
    out.prev = LayerState{to_vec(dhp), to_vec(dcp)};
    return out;
}

Vec dense_forward(const DenseParams& p, const Vec& input) {
    if (static_cast<int>(input.size()) != p.input_dim())
        throw std::invalid_argument("dense_forward: input length " + std::to_string(input.size()) +
                                    " != weight cols " + std::to_string(p.input_dim()));
    Mat out;
    dense_forward_block(p, from_vec(input), out);
    return to_vec(out);
}

void dense_forward_block(const DenseParams& p, const Mat& x, Mat& out) {
    check_shape(x, p.input_dim(), x.cols, "dense_forward: input");
    out.resize(p.output_dim(), x.cols);
    gemm_acc(out, p.weight, x);
    add_bias(out, p.bias);
}

void dense_backward_block(const DenseParams& p, const Mat& x, const Mat& dout, DenseParams& grads,
                          Mat& dx) {
    check_shape(dout, p.output_dim(), x.cols, "dense_backward: dout");
    gemm_acc_nt(grads.weight, dout, x);
    for (int r = 0; r < dout.rows; ++r)
        for (int j = 0; j < dout.cols; ++j) grads.bias[r] += dout(r, j);
    dx.resize(p.input_dim(), x.cols);
    gemm_acc_tn(dx, p.weight, dout);
}

void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                    const OptimizerConfig& cfg) {
    if (params.size() != grads.size())
        throw std::invalid_argument("optimizer_step: params and grads differ in length");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw std::runtime_error("optimizer_step: non-finite gradient at parameter index " +
                                     std::to_string(i));

    if (cfg.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grads[i];
        ++state.step;
        return;
    }

    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

}  // namespace qf
