#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "upix/distill/distill.hpp"
#include "upix/model/model.hpp"
#include "upix/objectives/schedule.hpp"

namespace upix {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Everything a CLI run needs. Defaults give the toy setup.
struct RunConfig {
    ModelConfig model = ModelConfig::toy();
    StagePlan plan = StagePlan::toy(100, 8);
    LossWeights loss;
    AdamConfig adam;
    std::size_t sample_steps = teacher_steps;
    DistillConfig distill;
    std::size_t distill_steps = 300;
    std::size_t distill_batch = 4;
    std::size_t data_count = 256;
    std::size_t data_resolution = 16;
    std::size_t eval_count = 64;
    std::uint64_t seed = 0;
    std::string out_dir = "run";
    std::string metrics_file = "metrics.log";
};

// Keys accepted by parse_run_config, in documentation order.
const std::vector<std::string>& run_config_keys();

// Flat "key = value" lines; '#' starts a comment. Unknown keys, duplicate
// keys and malformed values raise ConfigError naming the line.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::string& path);

// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

}  // namespace upix
