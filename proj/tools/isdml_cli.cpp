// isdml: command-line front end for data generation, training, evaluation
// and the diagnostic audits.
//
// Exit codes: 0 success, 2 invalid input or file format, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "isdml/augment.hpp"
#include "isdml/bound_audit.hpp"
#include "isdml/config.hpp"
#include "isdml/data.hpp"
#include "isdml/errors.hpp"
#include "isdml/gradcheck.hpp"
#include "isdml/kernels.hpp"
#include "isdml/losses.hpp"
#include "isdml/model.hpp"
#include "isdml/trainer.hpp"

namespace {

using namespace isdml;

constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out || !(out << text)) throw FormatError("cannot write " + path);
}

// --spec takes either a file path or inline "C=5,K=4,..." text.
SyntheticSpec spec_from_arg(const std::string& arg) {
    if (arg.find('=') != std::string::npos) return parse_synthetic_spec(arg);
    return parse_synthetic_spec(read_text(arg));
}

TrainConfig config_from_arg(const std::string& path) { return path.empty() ? TrainConfig{} : load_train_config(path); }

std::string g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

DomainDataset select_domain(const DomainDataset& ds, long domain) {
    if (domain < 0) return ds;
    return lodo_split(ds, static_cast<std::size_t>(domain)).target;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
    std::normal_distribution<double> g;
    Matrix m(r, c);
    for (auto& v : m.data()) v = g(rng);
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Implicit semantic augmentation + metric learning for domain generalization"};
    app.require_subcommand(1);

    // gen-data
    std::string spec_arg, out_path;
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic multi-domain benchmark");
    gen->add_option("--spec", spec_arg, "key=value spec file or inline 'C=5,K=4,...'")->required();
    gen->add_option("--out", out_path, "Output dataset file")->required();

    // ingest-idx
    std::vector<std::string> idx_images, idx_labels;
    auto* ingest = app.add_subcommand("ingest-idx", "Pack IDX image/label pairs (one pair per domain) into a dataset");
    ingest->add_option("--images", idx_images, "IDX image files, in domain order")->required();
    ingest->add_option("--labels", idx_labels, "IDX label files, in domain order")->required();
    ingest->add_option("--out", out_path, "Output dataset file")->required();

    // train
    std::string data_path, config_path, ckpt_path, log_path;
    std::size_t target_domain = 0;
    auto* train_cmd = app.add_subcommand("train", "Train with one domain held out");
    train_cmd->add_option("--data", data_path)->required();
    train_cmd->add_option("--target-domain", target_domain)->required();
    train_cmd->add_option("--config", config_path, "key=value config (defaults when omitted)");
    train_cmd->add_option("--out", ckpt_path, "Checkpoint path")->required();
    train_cmd->add_option("--log", log_path, "Per-epoch metrics CSV");

    // eval
    long eval_domain = -1;
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset or one of its domains");
    eval_cmd->add_option("--ckpt", ckpt_path)->required();
    eval_cmd->add_option("--data", data_path)->required();
    eval_cmd->add_option("--domain", eval_domain, "Domain id (all samples when omitted)");

    // gradcheck
    std::uint64_t seed = 1;
    std::size_t instances = 100;
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference audit of every analytic gradient");
    grad_cmd->add_option("--seed", seed);
    grad_cmd->add_option("--instances", instances);

    // mc-oracle
    double lambda = 1.0;
    std::size_t samples = 10000, dim = 8, classes = 5;
    auto* mc_cmd = app.add_subcommand("mc-oracle", "Closed-form augmented CE vs a Monte-Carlo estimate");
    mc_cmd->add_option("--lambda", lambda)->required();
    mc_cmd->add_option("--samples", samples)->required();
    mc_cmd->add_option("--seed", seed);
    mc_cmd->add_option("--dim", dim);
    mc_cmd->add_option("--classes", classes);

    // audit-bound
    std::string report_path, head = "dml";
    std::size_t limit = 0;
    auto* audit_cmd = app.add_subcommand("audit-bound", "Check the feature/logit distance sandwich on a checkpoint");
    audit_cmd->add_option("--ckpt", ckpt_path)->required();
    audit_cmd->add_option("--data", data_path)->required();
    audit_cmd->add_option("--domain", eval_domain, "Domain id (all samples when omitted)");
    audit_cmd->add_option("--limit", limit, "Audit only the first N samples (0 = all)");
    audit_cmd->add_option("--head", head, "Proxy matrix: dml or class")->check(CLI::IsMember({"dml", "class"}));
    audit_cmd->add_option("--report", report_path, "Per-pair CSV report");

    // ablate
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> targets;
    std::string runs_path;
    auto* ablate_cmd = app.add_subcommand("ablate", "baseline / +DML(features) / +DML(logits) / +ISDA / full");
    ablate_cmd->add_option("--data", data_path)->required();
    ablate_cmd->add_option("--config", config_path);
    ablate_cmd->add_option("--seeds", seeds, "Seeds (default: 1..5)");
    ablate_cmd->add_option("--targets", targets, "Held-out domains (default: all)");
    ablate_cmd->add_option("--out", out_path, "Summary CSV (means)");
    ablate_cmd->add_option("--runs", runs_path, "Per-run CSV");

    // sweep-alpha
    std::vector<double> alphas;
    auto* sweep_cmd = app.add_subcommand("sweep-alpha", "Target accuracy as a function of the DML weight");
    sweep_cmd->add_option("--data", data_path)->required();
    sweep_cmd->add_option("--target-domain", target_domain)->required();
    sweep_cmd->add_option("--config", config_path);
    sweep_cmd->add_option("--alphas", alphas, "Alpha values (default: 0 0.1 0.5 1 2 5)");
    sweep_cmd->add_option("--out", out_path, "CSV output (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitInvalid;
    }

    try {
        if (gen->parsed()) {
            const DomainDataset ds = generate(spec_from_arg(spec_arg));
            save_dataset(ds, out_path);
            std::printf("samples=%zu classes=%zu domains=%zu hash=%016llx\n", ds.size(), ds.num_classes,
                        ds.num_domains, static_cast<unsigned long long>(dataset_hash(ds)));
        } else if (ingest->parsed()) {
            if (idx_images.size() != idx_labels.size())
                throw InvalidInput("ingest-idx: need one label file per image file");
            std::vector<DomainDataset> parts;
            for (std::size_t k = 0; k < idx_images.size(); ++k) parts.push_back(ingest_idx(idx_images[k], idx_labels[k], k));
            const DomainDataset ds = concat(parts);
            save_dataset(ds, out_path);
            std::printf("samples=%zu classes=%zu domains=%zu hash=%016llx\n", ds.size(), ds.num_classes,
                        ds.num_domains, static_cast<unsigned long long>(dataset_hash(ds)));
        } else if (train_cmd->parsed()) {
            const TrainConfig cfg = config_from_arg(config_path);
            const DomainDataset ds = load_dataset(data_path);
            const TrainResult r = train(lodo_split(ds, target_domain), cfg);
            save_checkpoint(r.params, ckpt_path);
            if (!log_path.empty()) write_text(log_path, r.log.to_csv());
            const EpochMetrics& last = r.log.rows.back();
            std::printf("kernels=%s epochs=%zu source_acc=%s target_acc=%s\n",
                        std::string(kernels::isa_name(kernels::active().isa)).c_str(), r.log.rows.size(),
                        g17(last.source_acc).c_str(), g17(last.target_acc).c_str());
        } else if (eval_cmd->parsed()) {
            const ModelParams params = load_checkpoint(ckpt_path);
            const DomainDataset ds = select_domain(load_dataset(data_path), eval_domain);
            std::printf("samples=%zu accuracy=%s\n", ds.size(), g17(evaluate(params, ds)).c_str());
        } else if (grad_cmd->parsed()) {
            bool ok = true;
            std::printf("check,instances,skipped,max_rel_error,tolerance,status\n");
            for (const auto& e : run_gradcheck(seed, instances)) {
                ok = ok && e.passed();
                std::printf("%s,%zu,%zu,%.3e,%.0e,%s\n", e.name.c_str(), e.instances, e.skipped, e.max_rel_error,
                            e.tolerance, e.passed() ? "ok" : "FAIL");
            }
            if (!ok) return kExitNumerical;
        } else if (mc_cmd->parsed()) {
            if (dim == 0 || classes < 2) throw InvalidInput("mc-oracle: need dim >= 1 and classes >= 2");
            std::mt19937_64 rng(seed);
            const Matrix fm = random_matrix(rng, 1, dim), w = random_matrix(rng, classes, dim),
                         bm = random_matrix(rng, 1, classes), a = random_matrix(rng, dim, dim);
            Matrix sigma = matmul_nt(a, a);
            for (auto& v : sigma.data()) v /= static_cast<double>(dim);
            const Vector f(fm.data().begin(), fm.data().end()), b(bm.data().begin(), bm.data().end());
            const std::size_t y = seed % classes;
            const double closed = isda_ce_loss(f, w, b, y, sigma, lambda).value;
            const McEstimate mc = mc_ce_estimate(f, w, b, sigma, y, lambda, samples, seed + 1);
            std::printf("plain_ce=%s\nclosed_form=%s\nmc_mean=%s\nmc_std_error=%s\nbound_holds=%s\n",
                        g17(ce_loss(plain_logits(f, w, b), y).value).c_str(), g17(closed).c_str(),
                        g17(mc.mean).c_str(), g17(mc.std_error).c_str(),
                        closed >= mc.mean - 3 * mc.std_error ? "true" : "false");
        } else if (audit_cmd->parsed()) {
            const ModelParams params = load_checkpoint(ckpt_path);
            DomainDataset ds = select_domain(load_dataset(data_path), eval_domain);
            if (limit > 0 && limit < ds.size()) {
                ds = DomainDataset{{ds.images.begin(), ds.images.begin() + static_cast<long>(limit)},
                                   {ds.labels.begin(), ds.labels.begin() + static_cast<long>(limit)},
                                   {ds.domain_ids.begin(), ds.domain_ids.begin() + static_cast<long>(limit)},
                                   ds.num_classes, ds.num_domains};
            }
            if (ds.size() < 2) throw InvalidInput("audit-bound: need at least two samples");
            const Matrix features = forward(params, ds.all_rows()).features();
            const Matrix& w = head == "dml" ? params.dml_head.weight : params.classifier.weight;
            std::ofstream report;
            if (!report_path.empty()) {
                report.open(report_path, std::ios::trunc);
                if (!report) throw FormatError("cannot write " + report_path);
                report << "pair,feat_dist_sq,logit_dist_sq,lower,upper,satisfied\n";
            }
            const AuditSummary s = audit_dataset(features, w, [&](const BoundReport& r) {
                if (report.is_open())
                    report << r.i << '-' << r.j << ',' << g17(r.feat_dist_sq) << ',' << g17(r.logit_dist_sq) << ','
                           << g17(r.lower) << ',' << g17(r.upper) << ',' << (r.satisfied ? "true" : "false") << '\n';
            });
            std::printf("pairs=%zu violations=%zu fraction_satisfied=%s mean_slack=%s residual=%s c=%s\n", s.pairs,
                        s.violations, g17(s.fraction_satisfied).c_str(), g17(s.mean_slack).c_str(),
                        g17(s.residual).c_str(), g17(s.c).c_str());
            if (s.violations > 0) return kExitNumerical;
        } else if (ablate_cmd->parsed()) {
            const TrainConfig cfg = config_from_arg(config_path);
            if (seeds.empty()) seeds = {1, 2, 3, 4, 5};
            const DomainDataset ds = load_dataset(data_path);
            const AblationStudy study = ablation_study(ds, cfg, seeds, targets, [](const AblationRun& r) {
                std::fprintf(stderr, "seed=%llu target=%zu %s target_acc=%.4f\n",
                             static_cast<unsigned long long>(r.seed), r.target, r.row.name.c_str(), r.row.target_acc);
            });
            const std::string summary = ablation_csv(study.means);
            if (!runs_path.empty()) write_text(runs_path, ablation_runs_csv(study.runs));
            if (out_path.empty())
                std::fputs(summary.c_str(), stdout);
            else
                write_text(out_path, summary);
        } else if (sweep_cmd->parsed()) {
            const TrainConfig cfg = config_from_arg(config_path);
            const DomainDataset ds = load_dataset(data_path);
            const auto rows = sensitivity_sweep(lodo_split(ds, target_domain), cfg, alphas.empty() ? kDefaultAlphas : alphas);
            if (out_path.empty())
                std::fputs(sweep_csv(rows).c_str(), stdout);
            else
                write_text(out_path, sweep_csv(rows));
        }
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kExitNumerical;
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return kExitInvalid;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitInvalid;
    }
    return 0;
}
