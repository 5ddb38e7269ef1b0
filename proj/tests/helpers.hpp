#pragma once

#include "gradhom/lattice_mesh.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <utility>

namespace testing {

inline double rel_diff(double a, double b, double scale) { return std::abs(a - b) / scale; }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("gradhom_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Node lookup by coordinates rounded to a grid of spacing h.
class NodeIndex {
public:
    NodeIndex(const gradhom::PeriodicMesh& mesh, double h) : h_(h) {
        for (std::size_t n = 0; n < mesh.nodes.size(); ++n) index_[key(mesh.nodes[n].x(), mesh.nodes[n].y())] = static_cast<int>(n);
    }
    int at(double x, double y) const {
        const auto it = index_.find(key(x, y));
        return it == index_.end() ? -1 : it->second;
    }

private:
    std::pair<long, long> key(double x, double y) const { return {std::lround(x / h_), std::lround(y / h_)}; }
    double h_;
    std::map<std::pair<long, long>, int> index_;
};

/// Two-phase laminate on [-w/2, w/2]^2 with layers normal to y1.
inline gradhom::PeriodicMesh laminate_mesh(int n, double w = 1.0) {
    auto mesh = gradhom::build_structured_mesh(n, w, Eigen::Vector2d(-w / 2, -w / 2), [](const Eigen::Vector2d& c) {
        return c.x() < 0.0 ? gradhom::Phase::matrix : gradhom::Phase::inclusion;
    });
    gradhom::pair_periodic_boundary(mesh);
    return mesh;
}

inline gradhom::PeriodicMesh homogeneous_mesh(int n, double w = 1.0) {
    auto mesh = gradhom::build_structured_mesh(n, w, Eigen::Vector2d(-w / 2, -w / 2),
                                               [](const Eigen::Vector2d&) { return gradhom::Phase::matrix; });
    gradhom::pair_periodic_boundary(mesh);
    return mesh;
}

} // namespace testing
