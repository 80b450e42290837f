#include "upix/io/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "upix/io/checkpoint.hpp"
#include "upix/io/image.hpp"

namespace upix {

namespace {

constexpr std::array<std::string_view, shape_count> shape_names{"square", "circle", "triangle"};
constexpr std::array<std::string_view, color_count> color_names{"red", "green", "blue", "yellow", "cyan", "magenta"};
constexpr std::array<std::string_view, cell_count> cell_names{"top-left",    "top",    "top-right",
                                                              "left",        "center", "right",
                                                              "bottom-left", "bottom", "bottom-right"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view word) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == word) return static_cast<E>(i);
    }
    return std::nullopt;
}

}  // namespace

std::string_view shape_name(ShapeKind s) { return shape_names.at(static_cast<std::size_t>(s)); }
std::string_view color_name(Color c) { return color_names.at(static_cast<std::size_t>(c)); }
std::string_view cell_name(Cell c) { return cell_names.at(static_cast<std::size_t>(c)); }

std::array<double, 3> color_rgb(Color c) {
    switch (c) {
        case Color::red: return {1.0, -1.0, -1.0};
        case Color::green: return {-1.0, 1.0, -1.0};
        case Color::blue: return {-1.0, -1.0, 1.0};
        case Color::yellow: return {1.0, 1.0, -1.0};
        case Color::cyan: return {-1.0, 1.0, 1.0};
        case Color::magenta: return {1.0, -1.0, 1.0};
    }
    throw std::invalid_argument("color_rgb: unknown color");
}

std::array<double, 3> background_rgb(std::size_t background) {
    if (background == 0) return {-1.0, -1.0, -1.0};
    if (background == 1) return {-0.6, -0.6, -0.6};
    throw std::invalid_argument("background_rgb: index " + std::to_string(background) + " out of range");
}

CellBox cell_box(Cell cell, std::size_t resolution) {
    std::size_t cs = resolution / 3;
    if (cs == 0) throw std::invalid_argument("cell_box: resolution " + std::to_string(resolution) + " below 3");
    std::size_t offset = (resolution - 3 * cs) / 2;
    std::size_t margin = cs / 6;
    auto i = static_cast<std::size_t>(cell);
    return {offset + (i / 3) * cs + margin, offset + (i % 3) * cs + margin, cs - 2 * margin};
}

std::vector<std::uint8_t> shape_template(ShapeKind shape, std::size_t size) {
    std::vector<std::uint8_t> mask(size * size, 0);
    double half = static_cast<double>(size) / 2.0;
    for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
            double y = static_cast<double>(i) + 0.5;
            double x = static_cast<double>(j) + 0.5;
            bool on = false;
            switch (shape) {
                case ShapeKind::square: on = true; break;
                case ShapeKind::circle: on = (x - half) * (x - half) + (y - half) * (y - half) <= half * half; break;
                case ShapeKind::triangle: on = std::abs(x - half) <= static_cast<double>(i + 1) / 2.0; break;
            }
            mask[i * size + j] = on ? 1 : 0;
        }
    }
    return mask;
}

namespace {

void fill(std::vector<double>& px, std::size_t resolution, const std::array<double, 3>& rgb) {
    for (std::size_t i = 0; i < resolution * resolution; ++i) {
        for (std::size_t c = 0; c < 3; ++c) px[i * 3 + c] = rgb[c];
    }
}

void stamp(std::vector<double>& px, std::size_t resolution, std::size_t row, std::size_t col, std::size_t size,
           ShapeKind shape, Color color) {
    auto mask = shape_template(shape, size);
    auto rgb = color_rgb(color);
    for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
            if (!mask[i * size + j]) continue;
            std::size_t p = (row + i) * resolution + col + j;
            for (std::size_t c = 0; c < 3; ++c) px[p * 3 + c] = rgb[c];
        }
    }
}

}  // namespace

Tensor render_scene(const Scene& scene, std::size_t resolution) {
    std::vector<double> px(resolution * resolution * 3);
    fill(px, resolution, background_rgb(scene.background));
    for (const auto& m : scene.shapes) {
        auto box = cell_box(m.cell, resolution);
        stamp(px, resolution, box.row, box.col, box.size, m.shape, m.color);
    }
    return Tensor::from_data({resolution, resolution, 3}, std::move(px));
}

Tensor render_subject(ShapeKind shape, Color color, std::size_t background, std::size_t resolution) {
    std::vector<double> px(resolution * resolution * 3);
    fill(px, resolution, background_rgb(background));
    std::size_t margin = resolution / 8;
    stamp(px, resolution, margin, margin, resolution - 2 * margin, shape, color);
    return Tensor::from_data({resolution, resolution, 3}, std::move(px));
}

// ---- caption grammar -----------------------------------------------------

std::string mention_text(const Mention& m) {
    std::string s(color_name(m.color));
    s += ' ';
    s += shape_name(m.shape);
    s += ' ';
    s += cell_name(m.cell);
    return s;
}

std::string format_instruction(const Instruction& ins) {
    std::string out;
    auto join_mentions = [&out](const std::vector<Mention>& ms) {
        for (const auto& m : ms) {
            if (!out.empty()) out += "; ";
            out += mention_text(m);
        }
    };
    switch (ins.kind) {
        case InstructionKind::describe: join_mentions(ins.mentions); break;
        case InstructionKind::recolor:
            out = "recolor " + mention_text(ins.mentions.at(0)) + " to " + std::string(color_name(ins.new_color.value()));
            break;
        case InstructionKind::remove: out = "remove " + mention_text(ins.mentions.at(0)); break;
        case InstructionKind::place:
            out = "place subject " + std::string(cell_name(ins.subject_cell.value()));
            join_mentions(ins.mentions);
            break;
    }
    return out;
}

namespace {

std::vector<std::string_view> split(std::string_view s, std::string_view sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto at = s.find(sep, start);
        parts.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (at == std::string_view::npos) break;
        start = at + sep.size();
    }
    return parts;
}

[[noreturn]] void bad_caption(std::string_view caption, const std::string& why) {
    throw std::invalid_argument("caption '" + std::string(caption) + "': " + why);
}

Mention parse_mention(std::span<const std::string_view> words, std::string_view caption) {
    if (words.size() != 3) bad_caption(caption, "a mention is COLOR SHAPE CELL");
    auto color = lookup<Color>(color_names, words[0]);
    auto shape = lookup<ShapeKind>(shape_names, words[1]);
    auto cell = lookup<Cell>(cell_names, words[2]);
    if (!color) bad_caption(caption, "unknown color '" + std::string(words[0]) + "'");
    if (!shape) bad_caption(caption, "unknown shape '" + std::string(words[1]) + "'");
    if (!cell) bad_caption(caption, "unknown cell '" + std::string(words[2]) + "'");
    return {*shape, *color, *cell};
}

}  // namespace

Instruction parse_caption(std::string_view caption) {
    if (caption.empty()) bad_caption(caption, "empty");
    Instruction ins;
    auto clauses = split(caption, "; ");
    auto first = split(clauses[0], " ");
    std::size_t rest = 1;
    if (first[0] == "recolor") {
        if (clauses.size() != 1 || first.size() != 6 || first[4] != "to") {
            bad_caption(caption, "expected 'recolor COLOR SHAPE CELL to COLOR'");
        }
        ins.kind = InstructionKind::recolor;
        ins.mentions.push_back(parse_mention(std::span(first).subspan(1, 3), caption));
        ins.new_color = lookup<Color>(color_names, first[5]);
        if (!ins.new_color) bad_caption(caption, "unknown color '" + std::string(first[5]) + "'");
    } else if (first[0] == "remove") {
        if (clauses.size() != 1 || first.size() != 4) bad_caption(caption, "expected 'remove COLOR SHAPE CELL'");
        ins.kind = InstructionKind::remove;
        ins.mentions.push_back(parse_mention(std::span(first).subspan(1, 3), caption));
    } else if (first[0] == "place") {
        if (first.size() != 3 || first[1] != "subject") bad_caption(caption, "expected 'place subject CELL'");
        ins.kind = InstructionKind::place;
        ins.subject_cell = lookup<Cell>(cell_names, first[2]);
        if (!ins.subject_cell) bad_caption(caption, "unknown cell '" + std::string(first[2]) + "'");
    } else {
        rest = 0;
    }
    for (std::size_t i = rest; i < clauses.size(); ++i) {
        auto words = split(clauses[i], " ");
        ins.mentions.push_back(parse_mention(words, caption));
    }
    if (format_instruction(ins) != caption) bad_caption(caption, "non-canonical spacing");
    return ins;
}

// ---- dataset -------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

class Draw {
public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    std::vector<Cell> distinct_cells(std::size_t n) {
        std::array<Cell, cell_count> cells;
        for (std::size_t i = 0; i < cell_count; ++i) cells[i] = static_cast<Cell>(i);
        for (std::size_t i = 0; i < n; ++i) std::swap(cells[i], cells[i + below(cell_count - i)]);
        return {cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(n)};
    }
    Mention mention(Cell cell) {
        auto shape = static_cast<ShapeKind>(below(shape_count));
        auto color = static_cast<Color>(below(color_count));
        return {shape, color, cell};
    }
    Scene scene(std::size_t shapes) {
        Scene s;
        s.background = below(background_count);
        for (auto cell : distinct_cells(shapes)) s.shapes.push_back(mention(cell));
        return s;
    }

private:
    std::mt19937_64 rng_;
};

DatasetRecord make_t2i(Draw& draw, std::size_t resolution) {
    DatasetRecord r;
    r.task = TaskTag::t2i;
    r.scene = draw.scene(1 + draw.below(3));
    r.image = render_scene(r.scene, resolution);
    r.caption = format_instruction({InstructionKind::describe, r.scene.shapes, {}, {}});
    return r;
}

DatasetRecord make_edit(Draw& draw, std::size_t resolution) {
    DatasetRecord r;
    r.task = TaskTag::edit;
    auto source = draw.scene(1 + draw.below(3));
    auto k = draw.below(source.shapes.size());
    auto target = source;
    Instruction ins;
    ins.mentions = {source.shapes[k]};
    if (source.shapes.size() >= 2 && draw.below(2) == 0) {
        ins.kind = InstructionKind::remove;
        target.shapes.erase(target.shapes.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        ins.kind = InstructionKind::recolor;
        auto old = static_cast<std::size_t>(source.shapes[k].color);
        auto fresh = static_cast<Color>((old + 1 + draw.below(color_count - 1)) % color_count);
        ins.new_color = fresh;
        target.shapes[k].color = fresh;
    }
    r.condition = render_scene(source, resolution);
    r.scene = target;
    r.image = render_scene(target, resolution);
    r.caption = format_instruction(ins);
    return r;
}

DatasetRecord make_subject(Draw& draw, std::size_t resolution) {
    DatasetRecord r;
    r.task = TaskTag::subject;
    r.scene = draw.scene(1 + draw.below(2));
    const auto& subject = r.scene.shapes[0];
    r.condition = render_subject(subject.shape, subject.color, r.scene.background, resolution);
    r.image = render_scene(r.scene, resolution);
    Instruction ins;
    ins.kind = InstructionKind::place;
    ins.subject_cell = subject.cell;
    ins.mentions.assign(r.scene.shapes.begin() + 1, r.scene.shapes.end());
    r.caption = format_instruction(ins);
    return r;
}

}  // namespace

std::uint64_t record_seed(std::uint64_t seed, std::uint64_t index) { return splitmix64(splitmix64(seed) ^ index); }

std::vector<DatasetRecord> gen_synthetic_dataset(std::size_t count, std::size_t resolution, std::uint64_t seed,
                                                 std::size_t patch, const TaskMix& mix) {
    if (patch == 0 || resolution == 0 || resolution % patch != 0) {
        throw std::invalid_argument("gen_synthetic_dataset: resolution " + std::to_string(resolution) +
                                    " is not divisible by patch size " + std::to_string(patch));
    }
    if (resolution < 3) throw std::invalid_argument("gen_synthetic_dataset: resolution must be at least 3");
    double total = mix.t2i + mix.edit + mix.subject;
    if (!(mix.t2i >= 0 && mix.edit >= 0 && mix.subject >= 0) || !(total > 0)) {
        throw std::invalid_argument("gen_synthetic_dataset: task mix weights must be >= 0 with a positive sum");
    }
    std::vector<DatasetRecord> records;
    records.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Draw draw(record_seed(seed, i));
        double u = draw.unit() * total;
        if (u < mix.t2i) {
            records.push_back(make_t2i(draw, resolution));
        } else if (u < mix.t2i + mix.edit) {
            records.push_back(make_edit(draw, resolution));
        } else {
            records.push_back(make_subject(draw, resolution));
        }
    }
    return records;
}

std::vector<TrainingSample> to_training_samples(const std::vector<DatasetRecord>& records, bool text_only_items) {
    std::vector<TrainingSample> out;
    std::set<std::string> seen;
    for (const auto& r : records) {
        TrainingSample s;
        s.image = r.image;
        s.caption = r.caption;
        if (r.condition) s.conditions.push_back(*r.condition);
        s.task = r.task;
        out.push_back(std::move(s));
    }
    if (text_only_items) {
        for (const auto& r : records) {
            if (!seen.insert(r.caption).second) continue;
            TrainingSample s;
            s.caption = r.caption;
            s.task = r.task;
            s.text_only = true;
            out.push_back(std::move(s));
        }
    }
    return out;
}

void write_dataset(const std::string& directory, const std::vector<DatasetRecord>& records) {
    std::string index;
    for (std::size_t i = 0; i < records.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "%05zu", i);
        const auto& r = records[i];
        write_image(directory + "/" + stem + ".ppm", r.image);
        if (r.condition) write_image(directory + "/" + stem + ".cond.ppm", *r.condition);
        index += std::string(stem) + "\t" + std::string(task_name(r.task)) + "\t" + r.caption + "\n";
    }
    write_file(directory + "/index.tsv", std::span(reinterpret_cast<const std::uint8_t*>(index.data()), index.size()));
}

// ---- caption checker -----------------------------------------------------

std::optional<Detection> detect_cell(const Tensor& image, Cell cell) {
    if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) != image.dim(1)) {
        throw ShapeError("detect_cell: expected a square H x W x 3 image, got " + shape_str(image.shape()));
    }
    std::size_t res = image.dim(0);
    auto box = cell_box(cell, res);
    auto px = image.data();

    // Palette entries 0..5 are shape colours, 6.. are backgrounds.
    std::vector<std::array<double, 3>> palette;
    for (std::size_t c = 0; c < color_count; ++c) palette.push_back(color_rgb(static_cast<Color>(c)));
    for (std::size_t b = 0; b < background_count; ++b) palette.push_back(background_rgb(b));

    std::vector<std::size_t> label(box.size * box.size);
    std::array<std::size_t, color_count> votes{};
    for (std::size_t i = 0; i < box.size; ++i) {
        for (std::size_t j = 0; j < box.size; ++j) {
            std::size_t p = ((box.row + i) * res + box.col + j) * 3;
            std::size_t best = 0;
            double best_d = INFINITY;
            for (std::size_t k = 0; k < palette.size(); ++k) {
                double d = 0.0;
                for (std::size_t c = 0; c < 3; ++c) d += (px[p + c] - palette[k][c]) * (px[p + c] - palette[k][c]);
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            label[i * box.size + j] = best;
            if (best < color_count) ++votes[best];
        }
    }
    auto top = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    if (votes[top] == 0) return std::nullopt;

    Detection det;
    det.color = static_cast<Color>(top);
    det.pixels = votes[top];
    double best_iou = -1.0;
    for (std::size_t s = 0; s < shape_count; ++s) {
        auto tmpl = shape_template(static_cast<ShapeKind>(s), box.size);
        std::size_t inter = 0, uni = 0;
        for (std::size_t k = 0; k < tmpl.size(); ++k) {
            bool a = tmpl[k] != 0;
            bool b = label[k] == top;
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
        double iou = static_cast<double>(inter) / static_cast<double>(uni);
        if (iou > best_iou) {
            best_iou = iou;
            det.shape = static_cast<ShapeKind>(s);
        }
    }
    return det;
}

CheckResult check_mentions(const Tensor& image, const std::vector<Mention>& mentions) {
    CheckResult result;
    for (const auto& m : mentions) {
        ++result.total;
        auto det = detect_cell(image, m.cell);
        if (det && det->color == m.color && det->shape == m.shape) ++result.correct;
    }
    return result;
}

}  // namespace upix
