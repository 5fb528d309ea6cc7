#pragma once

// Feed-forward feature extractor (ReLU hidden layers) with two affine heads
// on the last hidden activation f: a classifier head and a separate head
// whose outputs feed the metric-learning loss.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "isdml/linalg.hpp"
#include "isdml/losses.hpp"

namespace isdml {

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ModelParams {
    std::vector<std::size_t> widths;  // input, hidden..., feature dim
    std::size_t num_classes = 0;
    std::vector<DenseLayer> hidden;
    DenseLayer classifier;  // C x d
    DenseLayer dml_head;    // C x d

    std::size_t input_dim() const { return widths.front(); }
    std::size_t feature_dim() const { return widths.back(); }

    // All tensors in declaration order: hidden W, b pairs, then classifier, then DML head.
    std::vector<std::span<double>> tensors();
    std::vector<std::span<const double>> tensors() const;
    std::size_t parameter_count() const;

    bool same_shape(const ModelParams& other) const;
    static ModelParams zeros(std::span<const std::size_t> widths, std::size_t num_classes);
    static ModelParams zeros_like(const ModelParams& p) { return zeros(p.widths, p.num_classes); }
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;   // per hidden layer, before ReLU
    std::vector<Matrix> post;  // per hidden layer, after ReLU; post.back() is f
    Matrix class_logits;
    Matrix dml_logits;

    const Matrix& features() const { return post.back(); }
    std::size_t rows() const { return input.rows(); }
};

// Glorot-uniform weights, zero biases. widths = {input, hidden..., d}.
ModelParams init_model(std::uint64_t seed, std::span<const std::size_t> widths, std::size_t num_classes);

ForwardTrace forward(const ModelParams& params, const Matrix& batch);

// Reverse-mode pass. Empty upstream matrices count as zero. The direct head
// terms of `upstream` (class_W, class_b, dml_W, dml_b) are added to the head
// gradients.
ModelParams backward(const ModelParams& params, const ForwardTrace& trace, const BatchGradients& upstream);

// params -= lr * grads
void sgd_step(ModelParams& params, const ModelParams& grads, double lr);

// Index of the largest classifier logit per row (lowest index on ties).
std::vector<std::size_t> predict(const ModelParams& params, const Matrix& batch);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

std::vector<char> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::vector<char>& bytes);

}  // namespace isdml
