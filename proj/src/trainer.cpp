#include "isdml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "isdml/errors.hpp"
#include "isdml/losses.hpp"
#include "isdml/stats.hpp"

namespace isdml {

namespace {

std::string fmt_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void check_split(const LodoSplit& split, const TrainConfig& cfg) {
    cfg.validate();
    split.train.validate();
    split.target.validate();
    if (split.train.size() == 0) throw InvalidInput("train: no source samples");
    if (split.train.num_classes < 2) throw InvalidInput("train: need at least two classes");
    if (split.target.size() > 0 && split.target.input_dim() != split.train.input_dim())
        throw InvalidInput("train: source and target image shapes differ");
    if (split.target.num_classes != split.train.num_classes)
        throw InvalidInput("train: source and target label spaces differ");
}

struct Accum {
    double weight = 0.0;
    EpochMetrics sums;

    void add(const FactLossParts& fact, double dml, double total, double w) {
        weight += w;
        sums.cls_ori += w * fact.cls_ori;
        sums.cls_aug += w * fact.cls_aug;
        sums.cot_a2o += w * fact.cot_a2o;
        sums.cot_o2a += w * fact.cot_o2a;
        sums.dml += w * dml;
        sums.total += w * total;
    }

    EpochMetrics mean(std::size_t epoch) const {
        EpochMetrics m = sums;
        m.epoch = epoch;
        for (double* x : {&m.cls_ori, &m.cls_aug, &m.cot_a2o, &m.cot_o2a, &m.dml, &m.total}) *x /= weight;
        return m;
    }
};

bool finite_params(const ModelParams& p) {
    for (auto t : p.tensors())
        if (!all_finite(t)) return false;
    return true;
}

}  // namespace

std::string MetricsLog::to_csv() const {
    std::ostringstream os;
    os << "epoch,cls_ori,cls_aug,cot_a2o,cot_o2a,dml,total,source_acc,target_acc\n";
    for (const auto& r : rows) {
        os << r.epoch;
        for (double x : {r.cls_ori, r.cls_aug, r.cot_a2o, r.cot_o2a, r.dml, r.total, r.source_acc, r.target_acc})
            os << ',' << fmt_real(x);
        os << '\n';
    }
    return os.str();
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    // Fisher-Yates with an explicit bounded draw, independent of std::shuffle's implementation.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

StepLoss step_loss(const ModelParams& params, const ForwardTrace& trace, std::span<const std::size_t> labels,
                   const Matrix& teacher_logits, const CovarianceBank& bank, double lambda, const TrainConfig& cfg) {
    std::vector<std::size_t> labels2(labels.begin(), labels.end());
    labels2.insert(labels2.end(), labels.begin(), labels.end());

    IsdaClassification isda;
    if (lambda > 0.0) isda = {&bank, lambda};
    const FactLossParts fact = fact_loss(trace, teacher_logits, labels, params, cfg.fact, isda);

    LossValue dml;
    if (cfg.alpha > 0.0) {
        if (cfg.dml_input == DmlInput::logits) {
            const CovarianceBank& b = lambda > 0.0 ? bank : CovarianceBank::zeros(params.num_classes, params.feature_dim());
            dml = dml_on_augmented_logits(trace.features(), params.dml_head.weight, params.dml_head.bias, labels2, b,
                                          lambda, cfg.margin);
        } else {
            dml = dml_on_features(trace.features(), labels2, cfg.margin);
        }
    }
    StepLoss out;
    out.fact = fact;
    out.objective = total_objective(fact, dml, cfg.alpha);
    out.grads = backward(params, trace, out.objective.grads);
    return out;
}

TrainResult train(const LodoSplit& split, const TrainConfig& cfg) {
    check_split(split, cfg);
    const DomainDataset& src = split.train;
    const std::size_t n_train = src.size();
    const std::size_t classes = src.num_classes;

    std::vector<std::size_t> widths{src.input_dim()};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    const std::size_t d = widths.back();

    TrainResult result;
    ModelParams& params = result.params;
    params = init_model(cfg.seed, widths, classes);
    TeacherState& teacher = result.teacher;
    teacher = {params, cfg.fact.teacher_momentum};

    const bool uses_isda = cfg.isda_enabled && cfg.lambda0 > 0.0;
    std::vector<ClassStats> stats;
    for (std::size_t c = 0; c < classes; ++c) stats.push_back(ClassStats::empty(c, d));

    const std::size_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = steps_per_epoch * cfg.epochs;
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<std::size_t> perm = epoch_permutation(n_train, cfg.seed, epoch);
        Accum acc;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size, ++step) {
            const std::size_t n = std::min(cfg.batch_size, n_train - start);
            const std::span<const std::size_t> idx(perm.data() + start, n);

            // Fourier-augmented twins, each mixed with a sample from another domain.
            std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                              static_cast<std::uint32_t>(step), 0xa117u};
            std::mt19937_64 rng(seq);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::vector<std::size_t> labels(n);
            Matrix ori = src.rows(idx);
            Matrix aug(n, ori.cols());
            std::vector<std::size_t> partners;
            for (std::size_t r = 0; r < n; ++r) {
                labels[r] = src.labels[idx[r]];
                const double eta = cfg.fact.eta_max * unit(rng);
                partners.clear();
                for (std::size_t q = 0; q < n; ++q)
                    if (src.domain_ids[idx[q]] != src.domain_ids[idx[r]]) partners.push_back(idx[q]);
                const std::size_t partner = partners.empty() ? idx[r] : partners[rng() % partners.size()];
                const Image mixed = amplitude_mix(src.images[idx[r]], src.images[partner], eta);
                std::copy(mixed.pixels.begin(), mixed.pixels.end(), aug.row(r).begin());
            }
            const Matrix stacked = stack_rows(ori, aug);
            std::vector<std::size_t> labels2 = labels;
            labels2.insert(labels2.end(), labels.begin(), labels.end());

            // Inputs were validated up front, so an invalid-input error from here on
            // means an intermediate value went non-finite.
            try {
                const ForwardTrace trace = forward(params, stacked);
                const double lambda = cfg.lambda_at(step, total_steps);

                CovarianceBank bank;
                if (uses_isda) {
                    for (std::size_t c = 0; c < classes; ++c) {
                        std::vector<std::size_t> rows;
                        for (std::size_t r = 0; r < labels2.size(); ++r)
                            if (labels2[r] == c) rows.push_back(r);
                        if (rows.empty()) continue;
                        Matrix batch(rows.size(), d);
                        for (std::size_t i = 0; i < rows.size(); ++i) {
                            const auto f = trace.features().row(rows[i]);
                            std::copy(f.begin(), f.end(), batch.row(i).begin());
                        }
                        stats[c] = update(stats[c], batch);
                    }
                    bank = snapshot_all(stats);
                }

                Matrix teacher_logits;
                if (cfg.fact.beta > 0.0) teacher_logits = forward(teacher.params, stacked).class_logits;

                const StepLoss loss = step_loss(params, trace, labels, teacher_logits, bank, lambda, cfg);
                const Objective& obj = loss.objective;
                if (!std::isfinite(obj.value) || !finite_params(loss.grads))
                    throw NumericalError("train: non-finite loss or gradient at step " + std::to_string(step));
                sgd_step(params, loss.grads, cfg.lr);
                teacher = ema_update(teacher, params);
                acc.add(loss.fact, obj.dml, obj.value, static_cast<double>(n));
            } catch (const InvalidInput& e) {
                throw NumericalError("train: step " + std::to_string(step) + ": " + e.what());
            }
        }
        EpochMetrics m = acc.mean(epoch);
        m.source_acc = evaluate(params, split.train);
        m.target_acc = split.target.size() ? evaluate(params, split.target) : 0.0;
        result.log.rows.push_back(m);
    }
    return result;
}

double evaluate(const ModelParams& params, const DomainDataset& ds) {
    if (ds.size() == 0) return 0.0;
    if (ds.input_dim() != params.input_dim()) throw InvalidInput("evaluate: image size does not match model input");
    constexpr std::size_t kChunk = 512;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += kChunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(ds.size(), start + kChunk); ++i) idx.push_back(i);
        const auto pred = predict(params, ds.rows(idx));
        for (std::size_t r = 0; r < idx.size(); ++r) correct += pred[r] == ds.labels[idx[r]];
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::vector<std::pair<std::string, TrainConfig>> ablation_configs(const TrainConfig& base) {
    auto make = [&](double alpha, DmlInput input, bool isda) {
        TrainConfig c = base;
        c.alpha = alpha;
        c.dml_input = input;
        c.isda_enabled = isda;
        return c;
    };
    return {
        {"baseline", make(0.0, DmlInput::logits, false)},
        {"dml_features", make(base.alpha, DmlInput::features, false)},
        {"dml_logits", make(base.alpha, DmlInput::logits, false)},
        {"isda", make(0.0, DmlInput::logits, true)},
        {"full", make(base.alpha, DmlInput::logits, true)},
    };
}

std::vector<AblationRow> ablation_grid(const LodoSplit& split, const TrainConfig& base) {
    std::vector<AblationRow> rows;
    for (auto& [name, cfg] : ablation_configs(base)) {
        const TrainResult r = train(split, cfg);
        rows.push_back({name, cfg, r.log.rows.back().source_acc, r.log.rows.back().target_acc});
    }
    return rows;
}

AblationStudy ablation_study(const DomainDataset& ds, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                             std::vector<std::size_t> targets, const std::function<void(const AblationRun&)>& progress) {
    if (seeds.empty()) throw InvalidInput("ablation_study: no seeds");
    ds.validate();
    if (targets.empty())
        for (std::size_t k = 0; k < ds.num_domains; ++k) targets.push_back(k);
    // Fail on a bad target before spending time on training.
    std::vector<LodoSplit> splits;
    for (std::size_t k : targets) splits.push_back(lodo_split(ds, k));

    AblationStudy study;
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.seed = seed;
        for (std::size_t t = 0; t < targets.size(); ++t) {
            for (auto& row : ablation_grid(splits[t], cfg)) {
                study.runs.push_back({seed, targets[t], std::move(row)});
                if (progress) progress(study.runs.back());
            }
        }
    }
    for (const auto& [name, cfg] : ablation_configs(base)) {
        AblationRow mean{name, cfg, 0.0, 0.0};
        std::size_t count = 0;
        for (const auto& run : study.runs) {
            if (run.row.name != name) continue;
            mean.source_acc += run.row.source_acc;
            mean.target_acc += run.row.target_acc;
            ++count;
        }
        mean.source_acc /= static_cast<double>(count);
        mean.target_acc /= static_cast<double>(count);
        study.means.push_back(mean);
    }
    return study;
}

std::string ablation_runs_csv(const std::vector<AblationRun>& runs) {
    std::ostringstream os;
    os << "seed,target_domain,method,source_acc,target_acc\n";
    for (const auto& r : runs)
        os << r.seed << ',' << r.target << ',' << r.row.name << ',' << fmt_real(r.row.source_acc) << ','
           << fmt_real(r.row.target_acc) << '\n';
    return os.str();
}

std::vector<SweepRow> sensitivity_sweep(const LodoSplit& split, const TrainConfig& base, std::vector<double> alphas) {
    if (alphas.empty()) throw InvalidInput("sensitivity_sweep: no alpha values");
    std::sort(alphas.begin(), alphas.end());
    std::vector<SweepRow> rows;
    for (double a : alphas) {
        TrainConfig cfg = base;
        cfg.alpha = a;
        const TrainResult r = train(split, cfg);
        rows.push_back({a, r.log.rows.back().source_acc, r.log.rows.back().target_acc});
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "method,alpha,dml_input,isda_enabled,source_acc,target_acc\n";
    for (const auto& r : rows)
        os << r.name << ',' << fmt_real(r.cfg.alpha) << ',' << to_string(r.cfg.dml_input) << ','
           << (r.cfg.isda_enabled ? "true" : "false") << ',' << fmt_real(r.source_acc) << ','
           << fmt_real(r.target_acc) << '\n';
    return os.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "alpha,source_acc,target_acc\n";
    for (const auto& r : rows) os << fmt_real(r.alpha) << ',' << fmt_real(r.source_acc) << ',' << fmt_real(r.target_acc) << '\n';
    return os.str();
}

}  // namespace isdml
