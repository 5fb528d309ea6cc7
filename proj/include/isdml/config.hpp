#pragma once

// Flat key=value configuration: one pair per line, '#' starts a comment,
// unknown keys are errors.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "isdml/data.hpp"
#include "isdml/fourier_fact.hpp"

namespace isdml {

enum class LambdaSchedule { constant, linear_ramp };
enum class DmlInput { logits, features };

struct TrainConfig {
    double alpha = 1.0;
    double lambda0 = 0.5;
    LambdaSchedule lambda_schedule = LambdaSchedule::linear_ramp;
    double margin = 0.2;
    FactConfig fact;
    double lr = 0.01;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    DmlInput dml_input = DmlInput::logits;
    bool isda_enabled = true;
    std::vector<std::size_t> hidden = {128, 64};

    void validate() const;
    // Augmentation strength after `step` of `total_steps` optimizer steps.
    double lambda_at(std::size_t step, std::size_t total_steps) const;
};

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::string& path);
std::string format_train_config(const TrainConfig& cfg);

// Accepts newline- or comma-separated pairs; keys C, K, per_class_per_domain,
// image_size, seed.
SyntheticSpec parse_synthetic_spec(std::string_view text);

std::string_view to_string(LambdaSchedule s);
std::string_view to_string(DmlInput d);

}  // namespace isdml
