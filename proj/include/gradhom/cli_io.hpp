#pragma once

#include "gradhom/validation.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gradhom {

inline constexpr const char* kToolVersion = "1.0.0";

enum class InclusionModel { regularized, paper, explicit_values };

/// Everything a command needs, validated before any solve starts.
struct RunConfig {
    std::string source = "<config>";

    CellGeometry geometry;
    double youngs_matrix = 100.0;
    double poisson_matrix = 0.3;
    InclusionModel inclusion_model = InclusionModel::regularized;
    double youngs_inclusion = 0.0; // used by explicit_values
    double poisson_inclusion = 0.3;

    int elements_per_cell = 100;
    std::optional<std::filesystem::path> mesh_file;

    SolverSettings solver;
    SourceDistribution psi_source = SourceDistribution::stiffness;

    // [validate]
    std::vector<double> macro_sizes{2.0, 4.0, 6.0, 10.0};
    std::vector<double> thetas{0.0, 0.05, 0.1, 0.15, 0.2};
    int micro_elements_per_cell = 20;
    int macro_elements = 20;
    MacroElement classical_element = MacroElement::hermite;
    SolverSettings specimen_solver{1e-10, 1e-14, 0, Preconditioner::cholesky};
    std::optional<std::filesystem::path> tensors_file;

    // [sweep]
    std::vector<double> cell_sizes;

    std::filesystem::path output_dir = "gradhom_out";

    /// Micro material after applying the inclusion model.
    MicroMaterial material() const;
    /// Solver settings actually used for the cell problems, with a note when
    /// they differ from the configured ones.
    SolverSettings cell_solver(std::string* note = nullptr) const;
};

/// Parses INI text. Throws ConfigError carrying the line number of the
/// offending entry (or of the section for missing keys).
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of a byte string, printed as 16 hex digits.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex_hash(std::uint64_t h);

/// Hash of the canonical resolved configuration.
std::string config_hash(const RunConfig& cfg);
/// Hash of the inputs that determine the effective tensors (geometry,
/// material, mesh, cell solver).
std::string geometry_hash(const RunConfig& cfg);

/// Shortest round-trip text for a double.
std::string format_double(double v);

/// Effective tensors in the CSV exchange format.
struct TensorFile {
    Voigt3 C = Voigt3::Zero();
    Voigt6 D = Voigt6::Zero();
    double epsilon = 1.0;
    std::string geometry_hash;
    std::string config_hash;
};

void write_effective_csv(std::ostream& out, const EffectiveTensors& t, const RunConfig& cfg);
TensorFile read_effective_csv(const std::filesystem::path& path);

struct CommandOptions {
    std::optional<std::filesystem::path> output_dir;
    bool dump_fields = false;
    std::optional<std::string> mesh_export; // "vtk" or "mesh"
};

/// Commands return the process exit status; module errors propagate as
/// exceptions (see run_cli for the mapping).
int cmd_homogenize(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log);
int cmd_validate(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, const CommandOptions& opts, std::ostream& log);

/// Full command line entry point: 0 ok, 1 solver or runtime failure, 2
/// configuration error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

} // namespace gradhom
