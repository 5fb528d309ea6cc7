#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "isdml/errors.hpp"
#include "isdml/trainer.hpp"
#include "support/oracles.hpp"

using namespace isdml;

namespace {

const DomainDataset& tiny_data() {
    static const DomainDataset ds = [] {
        SyntheticSpec s;
        s.num_classes = 3;
        s.num_domains = 3;
        s.per_class_per_domain = 8;
        s.image_size = 8;
        s.seed = 11;
        return generate(s);
    }();
    return ds;
}

TrainConfig tiny_config() {
    TrainConfig c;
    c.lr = 0.01;
    c.lambda0 = 0.5;
    c.epochs = 3;
    c.batch_size = 10;
    c.hidden = {16, 8};
    c.seed = 5;
    return c;
}

TrainConfig pure_ce(TrainConfig c) {
    c.alpha = 0.0;
    c.fact.beta = 0.0;
    c.fact.eta_max = 0.0;
    c.isda_enabled = false;
    return c;
}

// Mean softmax cross-entropy of one view and its logit gradient, computed from scratch.
double naive_ce_view(const Matrix& logits, std::size_t row0, std::span<const std::size_t> labels, Matrix& grad) {
    const std::size_t n = labels.size();
    double loss = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto z = logits.row(row0 + r);
        loss += oracle::naive_ce(z, labels[r]);
        const double lse = oracle::naive_log_sum_exp(z);
        for (std::size_t j = 0; j < z.size(); ++j)
            grad(row0 + r, j) = (std::exp(z[j] - lse) - (j == labels[r] ? 1.0 : 0.0)) / static_cast<double>(n);
    }
    return loss / static_cast<double>(n);
}

}  // namespace

TEST_CASE("epoch_permutation is a seeded permutation") {
    const auto a = epoch_permutation(100, 3, 0);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
    CHECK(a == epoch_permutation(100, 3, 0));
    CHECK(a != epoch_permutation(100, 3, 1));
    CHECK(a != epoch_permutation(100, 4, 0));
    CHECK(epoch_permutation(0, 1, 0).empty());
}

TEST_CASE("cross-entropy decreases over the first epochs on the default benchmark") {
    const LodoSplit split = lodo_split(generate(SyntheticSpec{}), 0);
    TrainConfig c = pure_ce(TrainConfig{});
    c.epochs = 5;
    const TrainResult r = train(split, c);
    REQUIRE(r.log.rows.size() == 5);
    for (std::size_t e = 1; e < 5; ++e) CHECK(r.log.rows[e].cls_ori < r.log.rows[e - 1].cls_ori);
    CHECK(r.log.rows.back().dml == 0.0);
}

TEST_CASE("train equals a pure cross-entropy reference loop") {
    const LodoSplit split = lodo_split(tiny_data(), 1);
    const TrainConfig c = pure_ce(tiny_config());
    const TrainResult got = train(split, c);

    const DomainDataset& src = split.train;
    std::vector<std::size_t> widths{src.input_dim(), 16, 8};
    ModelParams p = init_model(c.seed, widths, src.num_classes);
    for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
        const auto perm = epoch_permutation(src.size(), c.seed, epoch);
        double sum_loss = 0;
        for (std::size_t start = 0; start < src.size(); start += c.batch_size) {
            const std::size_t n = std::min(c.batch_size, src.size() - start);
            const std::span<const std::size_t> idx(perm.data() + start, n);
            std::vector<std::size_t> labels;
            for (std::size_t i : idx) labels.push_back(src.labels[i]);
            const Matrix x = src.rows(idx);
            const ForwardTrace t = forward(p, stack_rows(x, x));
            BatchGradients up = BatchGradients::zeros(2 * n, p.feature_dim(), p.num_classes);
            const double loss = naive_ce_view(t.class_logits, 0, labels, up.class_logits) +
                                naive_ce_view(t.class_logits, n, labels, up.class_logits);
            sum_loss += loss * static_cast<double>(n);
            sgd_step(p, backward(p, t, up), c.lr);
        }
        const double mean = sum_loss / static_cast<double>(src.size());
        CHECK(std::abs(got.log.rows[epoch].total - mean) < 1e-12);
        CHECK(std::abs(got.log.rows[epoch].cls_ori + got.log.rows[epoch].cls_aug - mean) < 1e-12);
    }
    const auto a = got.params.tensors();
    const auto b = std::as_const(p).tensors();
    double worst = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t i = 0; i < a[k].size(); ++i) worst = std::max(worst, std::abs(a[k][i] - b[k][i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("training is bitwise deterministic") {
    const LodoSplit split = lodo_split(tiny_data(), 2);
    const TrainConfig c = tiny_config();
    const TrainResult a = train(split, c), b = train(split, c);
    CHECK(a.log == b.log);
    CHECK(a.log.to_csv() == b.log.to_csv());
    CHECK(encode_checkpoint(a.params) == encode_checkpoint(b.params));
    CHECK(encode_checkpoint(a.teacher.params) == encode_checkpoint(b.teacher.params));

    TrainConfig other = c;
    other.seed = 6;
    CHECK_FALSE(train(split, other).log == a.log);
}

TEST_CASE("disabling ISDA is the same as lambda0 = 0") {
    const LodoSplit split = lodo_split(tiny_data(), 0);
    TrainConfig off = tiny_config();
    off.isda_enabled = false;
    TrainConfig zero = tiny_config();
    zero.lambda0 = 0.0;
    const TrainResult a = train(split, off), b = train(split, zero);
    CHECK(a.log == b.log);
    CHECK(a.params == b.params);
}

TEST_CASE("metrics CSV layout") {
    const LodoSplit split = lodo_split(tiny_data(), 0);
    TrainConfig c = tiny_config();
    c.epochs = 2;
    const std::string csv = train(split, c).log.to_csv();
    CHECK(csv.rfind("epoch,cls_ori,cls_aug,cot_a2o,cot_o2a,dml,total,source_acc,target_acc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("train rejects bad inputs") {
    const LodoSplit split = lodo_split(tiny_data(), 0);
    TrainConfig c = tiny_config();
    c.lr = -1;
    CHECK_THROWS_AS(train(split, c), InvalidInput);
    LodoSplit empty = split;
    empty.train = DomainDataset{};
    empty.train.num_classes = 3;
    CHECK_THROWS_AS(train(empty, tiny_config()), InvalidInput);
}

TEST_CASE("evaluate") {
    SyntheticSpec s;
    s.per_class_per_domain = 20;
    s.image_size = 16;
    const DomainDataset ds = generate(s);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::vector<std::size_t> widths{ds.input_dim(), 32, 16};
        const double acc = evaluate(init_model(seed, widths, 5), ds);
        CHECK(acc >= 0.1);
        CHECK(acc <= 0.35);
    }

    std::vector<std::size_t> widths{ds.input_dim(), 8};
    const ModelParams p = init_model(3, widths, 5);
    DomainDataset relabelled = ds;
    relabelled.labels = predict(p, ds.all_rows());
    CHECK(evaluate(p, relabelled) == 1.0);

    DomainDataset shuffled = ds;
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(4));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        shuffled.images[i] = ds.images[order[i]];
        shuffled.labels[i] = ds.labels[order[i]];
        shuffled.domain_ids[i] = ds.domain_ids[order[i]];
    }
    CHECK(evaluate(p, shuffled) == evaluate(p, ds));
    CHECK(evaluate(p, DomainDataset{}) == 0.0);
}

TEST_CASE("ablation grid") {
    const LodoSplit split = lodo_split(tiny_data(), 1);
    TrainConfig base = tiny_config();
    base.epochs = 2;
    const auto rows = ablation_grid(split, base);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].name == "baseline");
    CHECK(rows[4].name == "full");
    CHECK(rows[0].cfg.alpha == 0.0);
    CHECK_FALSE(rows[0].cfg.isda_enabled);
    CHECK(rows[1].cfg.dml_input == DmlInput::features);
    CHECK(rows[2].cfg.dml_input == DmlInput::logits);
    CHECK(rows[3].cfg.isda_enabled);
    CHECK(rows[4].cfg.isda_enabled);
    CHECK(rows[4].cfg.alpha == base.alpha);

    TrainConfig direct = base;
    direct.alpha = 0.0;
    direct.isda_enabled = false;
    const TrainResult r = train(split, direct);
    CHECK(rows[0].target_acc == r.log.rows.back().target_acc);
    CHECK(rows[0].source_acc == r.log.rows.back().source_acc);

    const std::string csv = ablation_csv(rows);
    CHECK(csv.rfind("method,alpha,dml_input,isda_enabled,source_acc,target_acc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("ablation study averages runs") {
    TrainConfig base = tiny_config();
    base.epochs = 1;
    const AblationStudy s = ablation_study(tiny_data(), base, {1, 2}, {0, 2});
    REQUIRE(s.runs.size() == 20);
    REQUIRE(s.means.size() == 5);
    for (std::size_t m = 0; m < 5; ++m) {
        double sum = 0;
        for (const auto& run : s.runs)
            if (run.row.name == s.means[m].name) sum += run.row.target_acc;
        CHECK(s.means[m].target_acc == doctest::Approx(sum / 4).epsilon(1e-15));
    }
    CHECK_THROWS_AS(ablation_study(tiny_data(), base, {}, {}), InvalidInput);
    CHECK_THROWS_AS(ablation_study(tiny_data(), base, {1}, {7}), InvalidInput);
}

TEST_CASE("sensitivity sweep") {
    const LodoSplit split = lodo_split(tiny_data(), 0);
    TrainConfig base = tiny_config();
    base.epochs = 1;
    const auto rows = sensitivity_sweep(split, base, {2.0, 0.0, 1.0});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].alpha == 0.0);
    CHECK(rows[1].alpha == 1.0);
    CHECK(rows[2].alpha == 2.0);

    const auto single = sensitivity_sweep(split, base, {0.0});
    REQUIRE(single.size() == 1);
    TrainConfig direct = base;
    direct.alpha = 0.0;
    CHECK(single[0].target_acc == train(split, direct).log.rows.back().target_acc);
    CHECK(std::find(kDefaultAlphas.begin(), kDefaultAlphas.end(), 1.0) != kDefaultAlphas.end());
    CHECK_THROWS_AS(sensitivity_sweep(split, base, {}), InvalidInput);
}
