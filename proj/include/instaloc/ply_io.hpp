// ASCII PLY reader/writer for point clouds, with the optional per-point
// `semantic` and `instance` integer properties used by labeled scans.

#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "instaloc/geometry.hpp"

namespace instaloc {

struct PlyCloud {
    std::vector<Point3> points;
    std::vector<int32_t> semantic;  // empty when the file has no labels
    std::vector<int32_t> instance;

    bool has_labels() const { return !semantic.empty(); }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline void write_ply(std::ostream& os, const std::vector<Point3>& points,
                      const std::vector<int32_t>* semantic = nullptr,
                      const std::vector<int32_t>* instance = nullptr) {
    const bool labeled = semantic != nullptr;
    if (labeled && (semantic->size() != points.size() ||
                    instance == nullptr || instance->size() != points.size()))
        throw std::invalid_argument("write_ply: label arrays must match point count");

    os << "ply\n";
    os << "format ascii 1.0\n";
    os << "element vertex " << points.size() << "\n";
    os << "property double x\n";
    os << "property double y\n";
    os << "property double z\n";
    if (labeled) {
        os << "property int semantic\n";
        os << "property int instance\n";
    }
    os << "end_header\n";
    for (size_t i = 0; i < points.size(); ++i) {
        const Point3& p = points[i];
        os << detail::format_double(p.x) << ' ' << detail::format_double(p.y) << ' '
           << detail::format_double(p.z);
        if (labeled) os << ' ' << (*semantic)[i] << ' ' << (*instance)[i];
        os << '\n';
    }
}

inline std::string ply_to_string(const std::vector<Point3>& points,
                                 const std::vector<int32_t>* semantic = nullptr,
                                 const std::vector<int32_t>* instance = nullptr) {
    std::ostringstream os;
    write_ply(os, points, semantic, instance);
    return os.str();
}

inline void write_ply_file(const std::string& path, const std::vector<Point3>& points,
                           const std::vector<int32_t>* semantic = nullptr,
                           const std::vector<int32_t>* instance = nullptr) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_ply_file: cannot open " + path);
    write_ply(f, points, semantic, instance);
    if (!f) throw std::runtime_error("write_ply_file: write failed for " + path);
}

inline PlyCloud read_ply(std::istream& is, const std::string& origin = "<stream>") {
    auto fail = [&](const std::string& msg) -> std::runtime_error {
        return std::runtime_error("read_ply: " + origin + ": " + msg);
    };

    std::string line;
    if (!std::getline(is, line)) throw fail("empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "ply") throw fail("missing 'ply' magic");

    size_t vertex_count = 0;
    bool in_vertex_element = false;
    bool saw_format = false;
    std::vector<std::string> property_names;
    while (true) {
        if (!std::getline(is, line)) throw fail("unterminated header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "end_header") break;
        if (tok == "comment" || tok.empty()) continue;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw fail("only ascii format is supported, got '" + fmt + "'");
            saw_format = true;
        } else if (tok == "element") {
            std::string name;
            size_t count = 0;
            ls >> name >> count;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) vertex_count = count;
        } else if (tok == "property") {
            if (!in_vertex_element) continue;
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw fail("list properties are not supported");
            property_names.push_back(name);
        }
    }
    if (!saw_format) throw fail("missing format line");

    auto find_prop = [&](const std::string& name) -> int {
        for (size_t i = 0; i < property_names.size(); ++i)
            if (property_names[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
    if (ix < 0 || iy < 0 || iz < 0) throw fail("vertex element lacks x/y/z properties");
    const int isem = find_prop("semantic");
    const int iinst = find_prop("instance");
    if ((isem < 0) != (iinst < 0))
        throw fail("semantic and instance properties must appear together");

    PlyCloud cloud;
    cloud.points.reserve(vertex_count);
    const size_t ncols = property_names.size();
    std::vector<double> row(ncols);
    for (size_t v = 0; v < vertex_count; ++v) {
        if (!std::getline(is, line)) throw fail("truncated: expected " +
                                                std::to_string(vertex_count) + " vertices, got " +
                                                std::to_string(v));
        std::istringstream ls(line);
        for (size_t c = 0; c < ncols; ++c) {
            if (!(ls >> row[c])) throw fail("bad vertex row " + std::to_string(v));
        }
        cloud.points.emplace_back(row[static_cast<size_t>(ix)], row[static_cast<size_t>(iy)],
                                  row[static_cast<size_t>(iz)]);
        if (!cloud.points.back().is_finite()) throw fail("non-finite coordinate in row " +
                                                         std::to_string(v));
        if (isem >= 0) {
            cloud.semantic.push_back(static_cast<int32_t>(row[static_cast<size_t>(isem)]));
            cloud.instance.push_back(static_cast<int32_t>(row[static_cast<size_t>(iinst)]));
        }
    }
    return cloud;
}

inline PlyCloud read_ply_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_ply_file: cannot open " + path);
    return read_ply(f, path);
}

}  // namespace instaloc
