#pragma once

#include <cstdint>
#include <span>

#include "qf/matrix.hpp"

namespace qf {

/**
 * Weights and biases of one peephole LSTM layer.
 *
 * Gate pre-activations read the current input, the previous hidden state and
 * (except for the cell candidate) the previous cell state:
 *
 *   i = sigmoid(w_ix x + w_ih h_prev + w_ic c_prev + b_i)
 *   f = sigmoid(w_fx x + w_fh h_prev + w_fc c_prev + b_f)
 *   c = f . c_prev + i . tanh(w_cx x + w_ch h_prev + b_c)
 *   o = sigmoid(w_ox x + w_oh h_prev + w_oc c_prev + b_o)
 *   h = o . tanh(c)
 *
 * Note that the output gate reads the *previous* cell state, not the freshly
 * computed one. The w_*x blocks are H x D_in, everything else H x H / H.
 */
struct LstmLayerParams {
    Mat w_ix, w_ih, w_ic;
    Vec b_i;
    Mat w_fx, w_fh, w_fc;
    Vec b_f;
    Mat w_cx, w_ch;
    Vec b_c;
    Mat w_ox, w_oh, w_oc;
    Vec b_o;

    static LstmLayerParams zeros(int input_dim, int hidden_size);

    int hidden_size() const { return w_ih.rows; }
    int input_dim() const { return w_ix.cols; }
};

/// Fully connected output head: out = weight * input + bias.
struct DenseParams {
    Mat weight;  // out x in
    Vec bias;    // out

    static DenseParams zeros(int out_dim, int in_dim);
    int input_dim() const { return weight.cols; }
    int output_dim() const { return weight.rows; }
};

/// Hidden and cell vectors of one layer; always the same length.
struct LayerState {
    Vec h, c;
};

// Forward intermediates of one recurrent step over a column batch, cached for
// the backward pass.
struct LstmStepTrace {
    Mat x, h_prev, c_prev;
    Mat gate_i, gate_f, cand, gate_o, c, tanh_c;

    bool valid(int input_dim, int hidden_size) const;
};

/**
 * One recurrent step over a column batch: x is D_in x A, states are H x A.
 * h_out / c_out are resized as needed; pass a trace to capture the
 * intermediates required by lstm_step_block_backward.
 */
void lstm_step_block(const LstmLayerParams& p, const Mat& x, const Mat& h_prev, const Mat& c_prev,
                     Mat& h_out, Mat& c_out, LstmStepTrace* trace = nullptr);

/**
 * Reverse-mode step: given upstream gradients dh (w.r.t. the step's h output)
 * and dc_in (w.r.t. its c output, accumulated from the following step),
 * accumulates parameter gradients into `grads` and writes the gradients
 * w.r.t. the step inputs into dx, dh_prev, dc_prev.
 *
 * Throws if the trace was not captured or does not match the layer shape.
 */
void lstm_step_block_backward(const LstmLayerParams& p, const LstmStepTrace& t, const Mat& dh,
                              const Mat& dc_in, LstmLayerParams& grads, Mat& dx, Mat& dh_prev,
                              Mat& dc_prev);

// Single-vector convenience forms of the two ops above.
LayerState lstm_step(const LstmLayerParams& p, const Vec& input, const LayerState& prev,
                     LstmStepTrace* trace = nullptr);

struct LstmStepGradients {
    LstmLayerParams params;
    Vec input;
    LayerState prev;
};

LstmStepGradients lstm_step_backward(const LstmLayerParams& p, const LstmStepTrace& trace,
                                     const Vec& grad_h, const Vec& grad_c);

Vec dense_forward(const DenseParams& p, const Vec& input);
void dense_forward_block(const DenseParams& p, const Mat& x, Mat& out);
void dense_backward_block(const DenseParams& p, const Mat& x, const Mat& dout, DenseParams& grads,
                          Mat& dx);

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    std::int64_t step = 0;
    Vec m, v;  // first/second moment estimates (adam only)
};

/**
 * In-place parameter update over a flat view. Adam keeps bias-corrected
 * moment estimates in `state`; sgd is the plain p -= lr * g rule. A non-finite
 * gradient entry aborts with an error naming the offending index.
 */
void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& state,
                    const OptimizerConfig& cfg);

}  // namespace qf
