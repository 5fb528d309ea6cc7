#pragma once

// Simplified Fourier-augmented co-teacher objective:
//   L = CE(ori) + CE(aug) + beta * (KL_a2o + KL_o2a)
// where aug images keep the phase of the original and take a convex mix of
// amplitude spectra with another domain's image, and the KL terms compare the
// student against an exponential-moving-average teacher across the two views.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "isdml/image.hpp"
#include "isdml/linalg.hpp"
#include "isdml/losses.hpp"
#include "isdml/model.hpp"
#include "isdml/stats.hpp"

namespace isdml {

struct FactConfig {
    double beta = 2.0;
    double eta_max = 1.0;
    double teacher_momentum = 0.999;
    double temperature = 4.0;

    void validate() const;
};

struct TeacherState {
    ModelParams params;
    double momentum = 0.999;
};

// Full complex 2-D DFT of one channel (row-major h x w).
std::vector<std::complex<double>> fft2(const Image& img, std::size_t channel);

// Per channel: amplitude (1 - eta)|X1| + eta|X2| with the phase of X1, inverse
// transformed and clipped to [0, 1]. eta == 0 returns x1 unchanged.
Image amplitude_mix(const Image& x1, const Image& x2, double eta);

// teacher <- momentum * teacher + (1 - momentum) * student
TeacherState ema_update(const TeacherState& teacher, const ModelParams& student);

struct CotKl {
    double value = 0.0;
    Vector grad;  // w.r.t. student logits
};

// T^2 * KL(softmax(teacher / T) || softmax(student / T)).
CotKl cot_kl(std::span<const double> student_logits, std::span<const double> teacher_logits, double temperature);

// Optional implicit augmentation of the classification terms.
struct IsdaClassification {
    const CovarianceBank* bank = nullptr;
    double lambda = 0.0;
};

// Loss on a stacked forward: rows [0, n) are originals, rows [n, 2n) their
// augmented twins. teacher_logits has the same stacking and may be empty when
// cfg.beta == 0. Gradients are w.r.t. the student only.
FactLossParts fact_loss(const ForwardTrace& student, const Matrix& teacher_logits,
                        std::span<const std::size_t> labels, const ModelParams& student_params,
                        const FactConfig& cfg, IsdaClassification isda = {});

// Convenience form that runs both forwards.
FactLossParts fact_loss(const Matrix& batch_ori, const Matrix& batch_aug, std::span<const std::size_t> labels,
                        const ModelParams& student, const TeacherState& teacher, const FactConfig& cfg);

// Stacks two equally sized batches row-wise.
Matrix stack_rows(const Matrix& top, const Matrix& bottom);

}  // namespace isdml
