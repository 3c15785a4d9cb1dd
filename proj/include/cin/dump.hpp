#pragma once
// dump.hpp - plain-text matrices and 8-bit grayscale (binary PGM) images of grid maps.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cin/gridworld.hpp"

namespace cin {

inline void write_matrix_text(const std::string& path, const Grid<double>& g)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    char buf[40];
    for (int r = 0; r < g.size(); ++r) {
        for (int c = 0; c < g.size(); ++c) {
            std::snprintf(buf, sizeof buf, "%.9g", g(r, c));
            os << (c ? " " : "") << buf;
        }
        os << '\n';
    }
}

/// Min-max normalized to 0..255. A constant map renders black.
inline std::vector<unsigned char> to_gray(const Grid<double>& g)
{
    const auto& v = g.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double span = *hi - *lo;
    std::vector<unsigned char> px(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        px[i] = span > 0.0 ? static_cast<unsigned char>(std::lround(255.0 * (v[i] - *lo) / span)) : 0;
    return px;
}

inline void write_pgm(const std::string& path, const Grid<double>& g)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "P5\n" << g.size() << ' ' << g.size() << "\n255\n";
    const std::vector<unsigned char> px = to_gray(g);
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

inline Grid<double> map_grid(const WorldMap& map)
{
    Grid<double> g(map.size(), 0.0);
    g.values() = map.cells();
    return g;
}

}  // namespace cin
