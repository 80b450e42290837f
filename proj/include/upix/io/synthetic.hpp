#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "upix/core/tensor.hpp"
#include "upix/objectives/train.hpp"

namespace upix {

enum class ShapeKind : std::uint8_t { square, circle, triangle };
enum class Color : std::uint8_t { red, green, blue, yellow, cyan, magenta };
enum class Cell : std::uint8_t { top_left, top, top_right, left, center, right, bottom_left, bottom, bottom_right };

inline constexpr std::size_t shape_count = 3;
inline constexpr std::size_t color_count = 6;
inline constexpr std::size_t cell_count = 9;
inline constexpr std::size_t background_count = 2;

std::string_view shape_name(ShapeKind s);
std::string_view color_name(Color c);
std::string_view cell_name(Cell c);
std::array<double, 3> color_rgb(Color c);
std::array<double, 3> background_rgb(std::size_t background);

struct Mention {
    ShapeKind shape = ShapeKind::square;
    Color color = Color::red;
    Cell cell = Cell::center;

    friend bool operator==(const Mention&, const Mention&) = default;
};

struct Scene {
    std::vector<Mention> shapes;  // distinct cells
    std::size_t background = 0;
};

// Square pixel box of a cell: cells are floor(R/3) wide, the grid is centred,
// and each shape sits inside a margin of floor(cell/6).
struct CellBox {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t size = 0;
};
CellBox cell_box(Cell cell, std::size_t resolution);

// size x size occupancy of a shape template, row-major.
std::vector<std::uint8_t> shape_template(ShapeKind shape, std::size_t size);

Tensor render_scene(const Scene& scene, std::size_t resolution);
// Reference crop for subject records: the shape enlarged to fill the frame.
Tensor render_subject(ShapeKind shape, Color color, std::size_t background, std::size_t resolution);

// ---- caption grammar -----------------------------------------------------
//   describe: MENTION ("; " MENTION)*          MENTION = COLOR " " SHAPE " " CELL
//   recolor:  "recolor " MENTION " to " COLOR
//   remove:   "remove " MENTION
//   place:    "place subject " CELL ("; " MENTION)*

enum class InstructionKind : std::uint8_t { describe, recolor, remove, place };

struct Instruction {
    InstructionKind kind = InstructionKind::describe;
    std::vector<Mention> mentions;  // for place: the extra scene mentions
    std::optional<Color> new_color;
    std::optional<Cell> subject_cell;

    friend bool operator==(const Instruction&, const Instruction&) = default;
};

std::string mention_text(const Mention& m);
std::string format_instruction(const Instruction& ins);
// Throws std::invalid_argument when `caption` is outside the grammar.
Instruction parse_caption(std::string_view caption);

// ---- dataset -------------------------------------------------------------

struct DatasetRecord {
    Tensor image;
    std::string caption;
    std::optional<Tensor> condition;
    TaskTag task = TaskTag::t2i;
    Scene scene;  // contents of `image`
};

struct TaskMix {
    double t2i = 0.6;
    double edit = 0.2;
    double subject = 0.2;

    static TaskMix text_to_image() { return {1.0, 0.0, 0.0}; }
};

std::uint64_t record_seed(std::uint64_t seed, std::uint64_t index);

// Record i depends only on (resolution, record_seed(seed, i)). Throws
// std::invalid_argument when the resolution is not a multiple of `patch`.
std::vector<DatasetRecord> gen_synthetic_dataset(std::size_t count, std::size_t resolution, std::uint64_t seed,
                                                 std::size_t patch = 2, const TaskMix& mix = {});

// Image items plus, when requested, one text-only item per distinct caption.
std::vector<TrainingSample> to_training_samples(const std::vector<DatasetRecord>& records, bool text_only_items);

// Writes NNNNN.ppm (and NNNNN.cond.ppm) per record plus an index.tsv of
// "index<TAB>task<TAB>caption" lines into an existing directory.
void write_dataset(const std::string& directory, const std::vector<DatasetRecord>& records);

// ---- caption checker -----------------------------------------------------

struct Detection {
    Color color = Color::red;
    ShapeKind shape = ShapeKind::square;
    std::size_t pixels = 0;
};

// Dominant non-background colour in the cell box and the best-IoU template
// for the pixels of that colour; empty when the box holds no coloured pixels.
std::optional<Detection> detect_cell(const Tensor& image, Cell cell);

struct CheckResult {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

CheckResult check_mentions(const Tensor& image, const std::vector<Mention>& mentions);

}  // namespace upix
