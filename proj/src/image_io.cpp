#include <cmath>
#include <fstream>

#include "dualinf/errors.hpp"
#include "dualinf/eval.hpp"

namespace dualinf::eval {

std::uint8_t denorm_byte(float v) {
    // round half-up so v=0 lands on 128
    const float x = std::floor((v + 1.0f) * 127.5f + 0.5f);
    if (x <= 0.0f) return 0;
    if (x >= 255.0f) return 255;
    return static_cast<std::uint8_t>(x);
}

void write_image_grid(const TensorF& images, i64 cols, const std::string& path) {
    if (images.rank() != 4 || images.shape()[1] != 3)
        throw ShapeError("image grid: expected [N, 3, H, W] input");
    if (cols < 1) throw ContractError("image grid: cols must be >= 1");
    const i64 n = images.shape()[0], h = images.shape()[2], w = images.shape()[3];
    const i64 rows = (n + cols - 1) / cols;
    const i64 gutter = 2;
    const i64 out_w = cols * w + (cols - 1) * gutter;
    const i64 out_h = rows * h + (rows - 1) * gutter;
    std::vector<std::uint8_t> canvas(static_cast<std::size_t>(out_h * out_w * 3), 255);
    const float* px = images.data().data();
    for (i64 i = 0; i < n; ++i) {
        const i64 r0 = (i / cols) * (h + gutter);
        const i64 c0 = (i % cols) * (w + gutter);
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x)
                for (i64 ch = 0; ch < 3; ++ch)
                    canvas[static_cast<std::size_t>(((r0 + y) * out_w + c0 + x) * 3 + ch)] =
                        denorm_byte(px[((i * 3 + ch) * h + y) * w + x]);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("image grid: cannot write " + path);
    out << "P6\n" << out_w << " " << out_h << "\n255\n";
    out.write(reinterpret_cast<const char*>(canvas.data()),
              static_cast<std::streamsize>(canvas.size()));
    if (!out) throw IoError("image grid: short write to " + path);
}

}  // namespace dualinf::eval
