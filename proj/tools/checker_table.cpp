// Prints the single-shape checker table: every cell, shape and colour at the
// eval resolution, with the rendered cell box drawn as '#' (shape) and '.' (background).
#include <cstdio>
#include <string>

#include "upix/io/synthetic.hpp"

int main() {
    using namespace upix;
    constexpr std::size_t resolution = 16;
    std::printf("resolution\tbackground\tcell\tshape\tcolor\tbox\tcaption\n");
    std::size_t index = 0;
    for (std::size_t c = 0; c < cell_count; ++c) {
        for (std::size_t s = 0; s < shape_count; ++s) {
            for (std::size_t k = 0; k < color_count; ++k, ++index) {
                Mention m{static_cast<ShapeKind>(s), static_cast<Color>(k), static_cast<Cell>(c)};
                std::size_t background = index % background_count;
                auto image = render_scene({{m}, background}, resolution);
                auto box = cell_box(m.cell, resolution);
                auto bg = background_rgb(background);
                std::string art;
                for (std::size_t r = 0; r < box.size; ++r) {
                    if (r > 0) art += '/';
                    for (std::size_t x = 0; x < box.size; ++x) {
                        std::size_t at = ((box.row + r) * resolution + box.col + x) * 3;
                        art += image.at(at) == bg[0] && image.at(at + 1) == bg[1] && image.at(at + 2) == bg[2] ? '.'
                                                                                                              : '#';
                    }
                }
                std::printf("%zu\t%zu\t%s\t%s\t%s\t%s\t%s\n", resolution, background,
                            std::string(cell_name(m.cell)).c_str(), std::string(shape_name(m.shape)).c_str(),
                            std::string(color_name(m.color)).c_str(), art.c_str(), mention_text(m).c_str());
            }
        }
    }
}
