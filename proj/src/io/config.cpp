#include "upix/io/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "upix/io/checkpoint.hpp"

namespace upix {

namespace {

std::size_t parse_size(std::string_view v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a non-negative integer");
    return out;
}

double parse_double(std::string_view v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("expected a number");
    return out;
}

std::string show(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

SamplerMode parse_mode(std::string_view v) {
    if (v == "logit_normal") return SamplerMode::logit_normal;
    if (v == "uniform") return SamplerMode::uniform;
    throw ConfigError("expected 'logit_normal' or 'uniform'");
}

std::string show(SamplerMode m) { return m == SamplerMode::uniform ? "uniform" : "logit_normal"; }

struct Field {
    std::string key;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field size_field(std::string key, Member member) {
    return {std::move(key), [member](RunConfig& c, std::string_view v) { member(c) = parse_size(v); },
            [member](const RunConfig& c) {
                auto copy = c;
                return std::to_string(member(copy));
            }};
}

template <typename Member>
Field double_field(std::string key, Member member) {
    return {std::move(key), [member](RunConfig& c, std::string_view v) { member(c) = parse_double(v); },
            [member](const RunConfig& c) {
                auto copy = c;
                return show(member(copy));
            }};
}

StageSpec& stage(RunConfig& c, std::size_t i) {
    if (c.plan.stages.size() <= i) c.plan.stages.resize(i + 1);
    return c.plan.stages[i];
}

std::vector<Field> build_fields() {
    std::vector<Field> f;
    f.push_back(size_field("model.layers", [](RunConfig& c) -> std::size_t& { return c.model.layers; }));
    f.push_back(size_field("model.dim", [](RunConfig& c) -> std::size_t& { return c.model.dim; }));
    f.push_back(size_field("model.heads", [](RunConfig& c) -> std::size_t& { return c.model.heads; }));
    f.push_back(size_field("model.mlp_ratio", [](RunConfig& c) -> std::size_t& { return c.model.mlp_ratio; }));
    f.push_back(size_field("model.patch", [](RunConfig& c) -> std::size_t& { return c.model.patch; }));
    f.push_back(size_field("model.rope_stream", [](RunConfig& c) -> std::size_t& { return c.model.rope_split[0]; }));
    f.push_back(size_field("model.rope_row", [](RunConfig& c) -> std::size_t& { return c.model.rope_split[1]; }));
    f.push_back(size_field("model.rope_col", [](RunConfig& c) -> std::size_t& { return c.model.rope_split[2]; }));
    f.push_back(double_field("model.rope_base", [](RunConfig& c) -> double& { return c.model.rope_base; }));
    for (std::size_t i = 0; i < 3; ++i) {
        std::string p = "stage" + std::to_string(i + 1) + ".";
        f.push_back(size_field(p + "resolution", [i](RunConfig& c) -> std::size_t& { return stage(c, i).resolution; }));
        f.push_back(size_field(p + "steps", [i](RunConfig& c) -> std::size_t& { return stage(c, i).steps; }));
        f.push_back(size_field(p + "batch", [i](RunConfig& c) -> std::size_t& { return stage(c, i).batch_size; }));
        f.push_back(double_field(p + "t2i_weight", [i](RunConfig& c) -> double& { return stage(c, i).t2i_weight; }));
        f.push_back(double_field(p + "lm_weight", [i](RunConfig& c) -> double& { return stage(c, i).lm_weight; }));
        f.push_back(
            double_field(p + "condition_prob", [i](RunConfig& c) -> double& { return stage(c, i).condition_prob; }));
        f.push_back({p + "sampler", [i](RunConfig& c, std::string_view v) { stage(c, i).sampler = parse_mode(v); },
                     [i](const RunConfig& c) { return show(c.plan.stages.at(i).sampler); }});
    }
    f.push_back(size_field("refine.resolution", [](RunConfig& c) -> std::size_t& { return c.plan.refine.resolution; }));
    f.push_back(size_field("refine.steps", [](RunConfig& c) -> std::size_t& { return c.plan.refine.steps; }));
    f.push_back(size_field("refine.batch", [](RunConfig& c) -> std::size_t& { return c.plan.refine.batch_size; }));
    f.push_back(double_field("loss.perceptual", [](RunConfig& c) -> double& { return c.loss.perceptual; }));
    f.push_back(double_field("loss.lm", [](RunConfig& c) -> double& { return c.loss.lm; }));
    f.push_back(double_field("adam.lr", [](RunConfig& c) -> double& { return c.adam.lr; }));
    f.push_back(double_field("adam.beta1", [](RunConfig& c) -> double& { return c.adam.beta1; }));
    f.push_back(double_field("adam.beta2", [](RunConfig& c) -> double& { return c.adam.beta2; }));
    f.push_back(double_field("adam.eps", [](RunConfig& c) -> double& { return c.adam.eps; }));
    f.push_back(double_field("adam.clip_norm", [](RunConfig& c) -> double& { return c.adam.clip_norm; }));
    f.push_back(size_field("sampler.steps", [](RunConfig& c) -> std::size_t& { return c.sample_steps; }));
    f.push_back(double_field("distill.lambda_diff", [](RunConfig& c) -> double& { return c.distill.lambda_diff; }));
    f.push_back(double_field("distill.lambda_adv", [](RunConfig& c) -> double& { return c.distill.lambda_adv; }));
    f.push_back(size_field("distill.student_steps", [](RunConfig& c) -> std::size_t& { return c.distill.student_steps; }));
    f.push_back(size_field("distill.fake_ratio", [](RunConfig& c) -> std::size_t& { return c.distill.fake_ratio; }));
    f.push_back(size_field("distill.disc_hidden", [](RunConfig& c) -> std::size_t& { return c.distill.disc_hidden; }));
    f.push_back(double_field("distill.student_lr", [](RunConfig& c) -> double& { return c.distill.student_adam.lr; }));
    f.push_back(double_field("distill.fake_lr", [](RunConfig& c) -> double& { return c.distill.fake_adam.lr; }));
    f.push_back(double_field("distill.disc_lr", [](RunConfig& c) -> double& { return c.distill.disc_adam.lr; }));
    f.push_back(size_field("distill.steps", [](RunConfig& c) -> std::size_t& { return c.distill_steps; }));
    f.push_back(size_field("distill.batch", [](RunConfig& c) -> std::size_t& { return c.distill_batch; }));
    f.push_back(size_field("data.count", [](RunConfig& c) -> std::size_t& { return c.data_count; }));
    f.push_back(size_field("data.resolution", [](RunConfig& c) -> std::size_t& { return c.data_resolution; }));
    f.push_back(size_field("data.eval_count", [](RunConfig& c) -> std::size_t& { return c.eval_count; }));
    f.push_back({"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_size(v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"out.dir", [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); },
                 [](const RunConfig& c) { return c.out_dir; }});
    f.push_back({"out.metrics", [](RunConfig& c, std::string_view v) { c.metrics_file = std::string(v); },
                 [](const RunConfig& c) { return c.metrics_file; }});
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = build_fields();
    return table;
}

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& f : fields()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        auto hash = line.find('#');
        line = trim(line.substr(0, hash));
        if (line.empty()) continue;
        auto where = "line " + std::to_string(line_no) + ": ";
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        const Field* field = nullptr;
        for (const auto& f : fields()) {
            if (f.key == key) field = &f;
        }
        if (!field) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
        if (!seen.insert(std::string(key)).second) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
        if (value.empty()) throw ConfigError(where + "empty value for '" + std::string(key) + "'");
        try {
            field->set(base, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + std::string(key) + ": " + e.what());
        }
    }
    try {
        base.model.validate();
        base.plan.validate();
        base.loss.validate();
        base.distill.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (base.sample_steps == 0) throw ConfigError("invalid configuration: sampler.steps must be >= 1");
    if (base.distill_batch == 0) throw ConfigError("invalid configuration: distill.batch must be >= 1");
    return base;
}

RunConfig load_run_config(const std::string& path) {
    auto bytes = read_file(path);
    return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string format_run_config(const RunConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
    return out;
}

}  // namespace upix
