// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "groundlens/reporting.hpp"

namespace groundlens {

// Entry i holds 8-bit round(255 * clamp(1.5 - |4x - k|, 0, 1)) for x = i / 255,
// with k = 3, 2, 1 for the red, green and blue channels. Index 0 is dark
// blue (0, 0, 128) and index 255 dark red (128, 0, 0).
const std::array<Rgb, 256>& colormap_table() {
  static const std::array<Rgb, 256> table = {{
    Rgb{0, 0, 128}, Rgb{0, 0, 132}, Rgb{0, 0, 136}, Rgb{0, 0, 140}, Rgb{0, 0, 144}, Rgb{0, 0, 147}, Rgb{0, 0, 152}, Rgb{0, 0, 156},
    Rgb{0, 0, 160}, Rgb{0, 0, 163}, Rgb{0, 0, 168}, Rgb{0, 0, 172}, Rgb{0, 0, 176}, Rgb{0, 0, 179}, Rgb{0, 0, 184}, Rgb{0, 0, 188},
    Rgb{0, 0, 192}, Rgb{0, 0, 195}, Rgb{0, 0, 200}, Rgb{0, 0, 204}, Rgb{0, 0, 208}, Rgb{0, 0, 211}, Rgb{0, 0, 216}, Rgb{0, 0, 220},
    Rgb{0, 0, 224}, Rgb{0, 0, 227}, Rgb{0, 0, 232}, Rgb{0, 0, 236}, Rgb{0, 0, 240}, Rgb{0, 0, 243}, Rgb{0, 0, 248}, Rgb{0, 0, 252},
    Rgb{0, 0, 255}, Rgb{0, 4, 255}, Rgb{0, 8, 255}, Rgb{0, 13, 255}, Rgb{0, 16, 255}, Rgb{0, 21, 255}, Rgb{0, 25, 255}, Rgb{0, 29, 255},
    Rgb{0, 33, 255}, Rgb{0, 36, 255}, Rgb{0, 40, 255}, Rgb{0, 45, 255}, Rgb{0, 49, 255}, Rgb{0, 53, 255}, Rgb{0, 57, 255}, Rgb{0, 61, 255},
    Rgb{0, 65, 255}, Rgb{0, 68, 255}, Rgb{0, 72, 255}, Rgb{0, 77, 255}, Rgb{0, 81, 255}, Rgb{0, 85, 255}, Rgb{0, 89, 255}, Rgb{0, 93, 255},
    Rgb{0, 97, 255}, Rgb{0, 100, 255}, Rgb{0, 104, 255}, Rgb{0, 109, 255}, Rgb{0, 113, 255}, Rgb{0, 117, 255}, Rgb{0, 121, 255}, Rgb{0, 125, 255},
    Rgb{0, 129, 255}, Rgb{0, 132, 255}, Rgb{0, 137, 255}, Rgb{0, 141, 255}, Rgb{0, 145, 255}, Rgb{0, 148, 255}, Rgb{0, 153, 255}, Rgb{0, 157, 255},
    Rgb{0, 161, 255}, Rgb{0, 164, 255}, Rgb{0, 169, 255}, Rgb{0, 173, 255}, Rgb{0, 177, 255}, Rgb{0, 180, 255}, Rgb{0, 185, 255}, Rgb{0, 189, 255},
    Rgb{0, 193, 255}, Rgb{0, 196, 255}, Rgb{0, 201, 255}, Rgb{0, 205, 255}, Rgb{0, 209, 255}, Rgb{0, 212, 255}, Rgb{0, 217, 255}, Rgb{0, 221, 255},
    Rgb{0, 225, 255}, Rgb{0, 228, 255}, Rgb{0, 233, 255}, Rgb{0, 237, 255}, Rgb{0, 241, 255}, Rgb{0, 244, 255}, Rgb{0, 249, 255}, Rgb{0, 253, 255},
    Rgb{1, 255, 254}, Rgb{5, 255, 250}, Rgb{10, 255, 245}, Rgb{14, 255, 242}, Rgb{17, 255, 238}, Rgb{21, 255, 234}, Rgb{26, 255, 229}, Rgb{30, 255, 226},
    Rgb{33, 255, 222}, Rgb{37, 255, 218}, Rgb{42, 255, 213}, Rgb{46, 255, 210}, Rgb{49, 255, 206}, Rgb{53, 255, 202}, Rgb{58, 255, 197}, Rgb{62, 255, 194},
    Rgb{66, 255, 190}, Rgb{69, 255, 186}, Rgb{74, 255, 181}, Rgb{78, 255, 178}, Rgb{82, 255, 174}, Rgb{85, 255, 170}, Rgb{90, 255, 165}, Rgb{94, 255, 162},
    Rgb{98, 255, 158}, Rgb{101, 255, 154}, Rgb{106, 255, 149}, Rgb{110, 255, 146}, Rgb{114, 255, 142}, Rgb{117, 255, 138}, Rgb{122, 255, 133}, Rgb{126, 255, 130},
    Rgb{130, 255, 126}, Rgb{133, 255, 122}, Rgb{137, 255, 118}, Rgb{141, 255, 114}, Rgb{146, 255, 109}, Rgb{150, 255, 105}, Rgb{154, 255, 101}, Rgb{158, 255, 98},
    Rgb{162, 255, 94}, Rgb{165, 255, 90}, Rgb{169, 255, 86}, Rgb{173, 255, 82}, Rgb{178, 255, 77}, Rgb{182, 255, 73}, Rgb{186, 255, 69}, Rgb{190, 255, 66},
    Rgb{194, 255, 62}, Rgb{197, 255, 58}, Rgb{201, 255, 54}, Rgb{205, 255, 50}, Rgb{210, 255, 45}, Rgb{214, 255, 41}, Rgb{218, 255, 37}, Rgb{222, 255, 33},
    Rgb{226, 255, 30}, Rgb{229, 255, 26}, Rgb{233, 255, 22}, Rgb{237, 255, 18}, Rgb{242, 255, 13}, Rgb{246, 255, 9}, Rgb{250, 255, 5}, Rgb{254, 255, 1},
    Rgb{255, 253, 0}, Rgb{255, 249, 0}, Rgb{255, 245, 0}, Rgb{255, 241, 0}, Rgb{255, 236, 0}, Rgb{255, 232, 0}, Rgb{255, 228, 0}, Rgb{255, 225, 0},
    Rgb{255, 221, 0}, Rgb{255, 217, 0}, Rgb{255, 213, 0}, Rgb{255, 209, 0}, Rgb{255, 204, 0}, Rgb{255, 200, 0}, Rgb{255, 196, 0}, Rgb{255, 193, 0},
    Rgb{255, 189, 0}, Rgb{255, 185, 0}, Rgb{255, 181, 0}, Rgb{255, 177, 0}, Rgb{255, 172, 0}, Rgb{255, 168, 0}, Rgb{255, 164, 0}, Rgb{255, 161, 0},
    Rgb{255, 157, 0}, Rgb{255, 153, 0}, Rgb{255, 149, 0}, Rgb{255, 145, 0}, Rgb{255, 140, 0}, Rgb{255, 136, 0}, Rgb{255, 132, 0}, Rgb{255, 129, 0},
    Rgb{255, 125, 0}, Rgb{255, 121, 0}, Rgb{255, 117, 0}, Rgb{255, 113, 0}, Rgb{255, 108, 0}, Rgb{255, 104, 0}, Rgb{255, 100, 0}, Rgb{255, 97, 0},
    Rgb{255, 93, 0}, Rgb{255, 89, 0}, Rgb{255, 85, 0}, Rgb{255, 81, 0}, Rgb{255, 76, 0}, Rgb{255, 72, 0}, Rgb{255, 68, 0}, Rgb{255, 65, 0},
    Rgb{255, 61, 0}, Rgb{255, 57, 0}, Rgb{255, 53, 0}, Rgb{255, 49, 0}, Rgb{255, 44, 0}, Rgb{255, 40, 0}, Rgb{255, 36, 0}, Rgb{255, 33, 0},
    Rgb{255, 29, 0}, Rgb{255, 25, 0}, Rgb{255, 21, 0}, Rgb{255, 17, 0}, Rgb{255, 12, 0}, Rgb{255, 8, 0}, Rgb{255, 4, 0}, Rgb{255, 0, 0},
    Rgb{252, 0, 0}, Rgb{248, 0, 0}, Rgb{244, 0, 0}, Rgb{240, 0, 0}, Rgb{235, 0, 0}, Rgb{231, 0, 0}, Rgb{227, 0, 0}, Rgb{224, 0, 0},
    Rgb{220, 0, 0}, Rgb{216, 0, 0}, Rgb{212, 0, 0}, Rgb{208, 0, 0}, Rgb{203, 0, 0}, Rgb{199, 0, 0}, Rgb{195, 0, 0}, Rgb{192, 0, 0},
    Rgb{188, 0, 0}, Rgb{184, 0, 0}, Rgb{180, 0, 0}, Rgb{176, 0, 0}, Rgb{171, 0, 0}, Rgb{167, 0, 0}, Rgb{163, 0, 0}, Rgb{160, 0, 0},
    Rgb{156, 0, 0}, Rgb{152, 0, 0}, Rgb{148, 0, 0}, Rgb{144, 0, 0}, Rgb{139, 0, 0}, Rgb{135, 0, 0}, Rgb{132, 0, 0}, Rgb{128, 0, 0},
  }};
  return table;
}

Rgb colormap(double value) {
  const double v = std::isnan(value) ? 0.0 : std::clamp(value, 0.0, 1.0);
  return colormap_table()[static_cast<std::size_t>(std::lround(v * 255.0))];
}

}  // namespace groundlens
