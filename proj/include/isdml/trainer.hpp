#pragma once

// Deterministic SGD training of L_FACT + alpha * L_DML, leave-one-domain-out
// evaluation, and the ablation / alpha-sensitivity experiment drivers.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "isdml/config.hpp"
#include "isdml/data.hpp"
#include "isdml/fourier_fact.hpp"
#include "isdml/losses.hpp"
#include "isdml/model.hpp"
#include "isdml/stats.hpp"

namespace isdml {

struct EpochMetrics {
    std::size_t epoch = 0;
    double cls_ori = 0.0;
    double cls_aug = 0.0;
    double cot_a2o = 0.0;
    double cot_o2a = 0.0;
    double dml = 0.0;
    double total = 0.0;
    double source_acc = 0.0;
    double target_acc = 0.0;

    friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct MetricsLog {
    std::vector<EpochMetrics> rows;

    std::string to_csv() const;
    friend bool operator==(const MetricsLog&, const MetricsLog&) = default;
};

struct TrainResult {
    ModelParams params;
    TeacherState teacher;
    MetricsLog log;
};

// Sample order for one epoch; depends only on (n, seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct StepLoss {
    FactLossParts fact;
    Objective objective;
    ModelParams grads;  // d objective / d params, covariance bank held fixed
};

// L_FACT + alpha * L_DML on the forward pass of a stacked batch (originals then augmented twins)
// and its parameter gradient. labels has one entry per original row.
// teacher_logits may be empty when cfg.fact.beta == 0; bank is only read
// when lambda > 0.
StepLoss step_loss(const ModelParams& params, const ForwardTrace& trace, std::span<const std::size_t> labels,
                   const Matrix& teacher_logits, const CovarianceBank& bank, double lambda, const TrainConfig& cfg);

// Throws InvalidInput before any step if the data and config disagree.
TrainResult train(const LodoSplit& split, const TrainConfig& cfg);

// Fraction of samples whose arg-max classifier logit equals the label.
double evaluate(const ModelParams& params, const DomainDataset& ds);

struct AblationRow {
    std::string name;
    TrainConfig cfg;
    double source_acc = 0.0;
    double target_acc = 0.0;
};

// baseline, +DML(features), +DML(logits), +ISDA, full, derived from `base`.
std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base);

std::vector<AblationRow> ablation_grid(const LodoSplit& split, const TrainConfig& base);

// The ablation grid repeated over seeds and leave-one-domain-out targets.
struct AblationRun {
    std::uint64_t seed = 0;
    std::size_t target = 0;
    AblationRow row;
};

struct AblationStudy {
    std::vector<AblationRun> runs;
    std::vector<AblationRow> means;  // per method, target/source accuracy averaged over runs
};

// Empty `targets` means every domain. `progress` (optional) sees each run as it finishes.
AblationStudy ablation_study(const DomainDataset& ds, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                             std::vector<std::size_t> targets = {},
                             const std::function<void(const AblationRun&)>& progress = {});

std::string ablation_runs_csv(const std::vector<AblationRun>& runs);

struct SweepRow {
    double alpha = 0.0;
    double source_acc = 0.0;
    double target_acc = 0.0;
};

inline const std::vector<double> kDefaultAlphas = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0};

// One run per alpha, sorted ascending.
std::vector<SweepRow> sensitivity_sweep(const LodoSplit& split, const TrainConfig& base, std::vector<double> alphas);

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace isdml
