#include "isdml/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "isdml/errors.hpp"

namespace isdml {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw InvalidInput("config: '" + key + "' expects a real number, got '" + v + "'");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw InvalidInput("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InvalidInput("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::size_t> to_widths(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::string_view rest = v;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item(trim(rest.substr(0, comma)));
        out.push_back(to_uint(key, item));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

}  // namespace

std::string_view to_string(LambdaSchedule s) { return s == LambdaSchedule::constant ? "constant" : "linear-ramp"; }
std::string_view to_string(DmlInput d) { return d == DmlInput::logits ? "logits" : "features"; }

void TrainConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidInput("config: alpha must be >= 0");
    if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw InvalidInput("config: lambda0 must be >= 0");
    if (!std::isfinite(margin)) throw InvalidInput("config: margin must be finite");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidInput("config: lr must be > 0");
    if (epochs == 0) throw InvalidInput("config: epochs must be > 0");
    if (batch_size == 0) throw InvalidInput("config: batch_size must be > 0");
    if (hidden.empty()) throw InvalidInput("config: need at least one hidden layer");
    for (std::size_t w : hidden)
        if (w == 0) throw InvalidInput("config: hidden widths must be positive");
    fact.validate();
}

double TrainConfig::lambda_at(std::size_t step, std::size_t total_steps) const {
    if (!isda_enabled) return 0.0;
    if (lambda_schedule == LambdaSchedule::constant || total_steps == 0) return lambda0;
    return lambda0 * static_cast<double>(step) / static_cast<double>(total_steps);
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw InvalidInput("config line " + std::to_string(line_no) + ": expected key=value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidInput("config line " + std::to_string(line_no) + ": empty key");
        out.emplace_back(std::string(key), std::string(value));
    }
    return out;
}

TrainConfig parse_train_config(std::string_view text) {
    TrainConfig cfg;
    for (const auto& [k, v] : parse_key_values(text)) {
        if (k == "alpha") cfg.alpha = to_double(k, v);
        else if (k == "lambda0") cfg.lambda0 = to_double(k, v);
        else if (k == "lambda_schedule") {
            if (v == "constant") cfg.lambda_schedule = LambdaSchedule::constant;
            else if (v == "linear-ramp") cfg.lambda_schedule = LambdaSchedule::linear_ramp;
            else throw InvalidInput("config: lambda_schedule must be constant or linear-ramp");
        } else if (k == "margin") cfg.margin = to_double(k, v);
        else if (k == "beta") cfg.fact.beta = to_double(k, v);
        else if (k == "eta_max") cfg.fact.eta_max = to_double(k, v);
        else if (k == "teacher_momentum") cfg.fact.teacher_momentum = to_double(k, v);
        else if (k == "temperature") cfg.fact.temperature = to_double(k, v);
        else if (k == "lr") cfg.lr = to_double(k, v);
        else if (k == "epochs") cfg.epochs = to_uint(k, v);
        else if (k == "batch_size") cfg.batch_size = to_uint(k, v);
        else if (k == "seed") cfg.seed = to_uint(k, v);
        else if (k == "dml_input") {
            if (v == "logits") cfg.dml_input = DmlInput::logits;
            else if (v == "features") cfg.dml_input = DmlInput::features;
            else throw InvalidInput("config: dml_input must be logits or features");
        } else if (k == "isda_enabled") cfg.isda_enabled = to_bool(k, v);
        else if (k == "hidden") cfg.hidden = to_widths(k, v);
        else throw InvalidInput("config: unknown key '" + k + "'");
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

std::string format_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "alpha=" << cfg.alpha << '\n'
       << "lambda0=" << cfg.lambda0 << '\n'
       << "lambda_schedule=" << to_string(cfg.lambda_schedule) << '\n'
       << "margin=" << cfg.margin << '\n'
       << "beta=" << cfg.fact.beta << '\n'
       << "eta_max=" << cfg.fact.eta_max << '\n'
       << "teacher_momentum=" << cfg.fact.teacher_momentum << '\n'
       << "temperature=" << cfg.fact.temperature << '\n'
       << "lr=" << cfg.lr << '\n'
       << "epochs=" << cfg.epochs << '\n'
       << "batch_size=" << cfg.batch_size << '\n'
       << "seed=" << cfg.seed << '\n'
       << "dml_input=" << to_string(cfg.dml_input) << '\n'
       << "isda_enabled=" << (cfg.isda_enabled ? "true" : "false") << '\n'
       << "hidden=";
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) os << (i ? "," : "") << cfg.hidden[i];
    os << '\n';
    return os.str();
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
    std::string normalized(text);
    for (char& ch : normalized)
        if (ch == ',') ch = '\n';
    SyntheticSpec spec;
    for (const auto& [k, v] : parse_key_values(normalized)) {
        if (k == "C" || k == "classes") spec.num_classes = to_uint(k, v);
        else if (k == "K" || k == "domains") spec.num_domains = to_uint(k, v);
        else if (k == "per_class_per_domain") spec.per_class_per_domain = to_uint(k, v);
        else if (k == "image_size") spec.image_size = to_uint(k, v);
        else if (k == "seed") spec.seed = to_uint(k, v);
        else throw InvalidInput("dataset spec: unknown key '" + k + "'");
    }
    spec.validate();
    return spec;
}

}  // namespace isdml
