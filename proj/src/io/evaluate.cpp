#include "upix/io/evaluate.hpp"

#include <cstdio>

#include "upix/core/tape.hpp"
#include "upix/objectives/losses.hpp"
#include "upix/sampling/sampler.hpp"

namespace upix {

std::string EvalReport::record() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "records=%zu flow=%.9g lm=%.9g caption_correct=%zu caption_total=%zu caption_accuracy=%.6f",
                  records, flow, lm, caption.correct, caption.total, caption.accuracy());
    return buf;
}

std::uint64_t held_out_seed(std::uint64_t seed) { return record_seed(seed, 0x4845'4C44'4F55'5400ull); }

EvalReport evaluate(const ModelParameters& params, const ModelConfig& config,
                    const std::vector<DatasetRecord>& records, std::size_t sample_steps, std::uint64_t seed) {
    TapeScope no_recording(nullptr);
    EvalReport report;
    report.records = records.size();
    if (records.empty()) return report;
    double flow = 0.0;
    double lm = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        Prompt prompt{r.caption, {}};
        if (r.condition) prompt.conditions.push_back(*r.condition);
        auto noise = draw_noise(r.image.shape(), record_seed(seed, i));
        for (double t : eval_probe_times) {
            auto pred = predict(prompt, interpolate(r.image, noise, t), t, params, config);
            flow += flow_matching_loss(pred.clean, r.image).item();
            if (t == eval_probe_times[0]) lm += lm_loss(pred.text_logits, text_to_ids(r.caption)).item();
        }
        if (r.task == TaskTag::t2i) {
            auto image = sample(params, config, prompt, r.image.dim(0), SamplerConfig::uniform(sample_steps),
                                record_seed(seed ^ 0x5A5A5A5Aull, i));
            auto check = check_mentions(image, r.scene.shapes);
            report.caption.correct += check.correct;
            report.caption.total += check.total;
        }
    }
    report.flow = flow / static_cast<double>(records.size() * std::size(eval_probe_times));
    report.lm = lm / static_cast<double>(records.size());
    return report;
}

double caption_lm_loss(const ModelParameters& params, const ModelConfig& config,
                       const std::vector<DatasetRecord>& records) {
    TapeScope no_recording(nullptr);
    double total = 0.0;
    for (const auto& r : records) {
        auto text = encode_text(r.caption, params.at("text_embed"));
        ForwardOptions options;
        options.require_patches = false;
        auto out = forward_model(text, params, config, options);
        total += lm_loss(out.text_logits, text.text_ids).item();
    }
    return records.empty() ? 0.0 : total / static_cast<double>(records.size());
}

}  // namespace upix
