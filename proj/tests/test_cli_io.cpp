#include "helpers.hpp"

#include "gradhom/cli_io.hpp"
#include "gradhom/errors.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace gradhom;
namespace fs = std::filesystem;

namespace {

const char* kLattice = "[geometry]\n"
                       "cell_size = 1.0\n"
                       "wall_thickness = 0.1\n"
                       "\n"
                       "[material]\n"
                       "youngs_matrix = 100\n"
                       "poisson_matrix = 0.3\n"
                       "\n"
                       "[mesh]\n"
                       "elements_per_cell = 20\n";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
    args.insert(args.begin(), "gradhom");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (err_text) *err_text = err.str();
    return rc;
}

int data_lines(const std::string& text) {
    int n = 0;
    std::istringstream s(text);
    std::string line;
    while (std::getline(s, line))
        if (!line.empty() && line[0] != '#') ++n;
    return n - 1; // header row
}

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

} // namespace

TEST_SUITE("cli_io") {

TEST_CASE("defaults of a minimal config") {
    const RunConfig cfg = parse(kLattice);
    CHECK(cfg.geometry.cell_size == 1.0);
    CHECK(cfg.elements_per_cell == 20);
    CHECK(cfg.solver.rel_tol == 1e-5);
    CHECK(cfg.solver.abs_tol == 1e-10);
    CHECK(cfg.solver.preconditioner == Preconditioner::diagonal);
    const MicroMaterial m = cfg.material();
    CHECK(m.youngs_inclusion == doctest::Approx(1e-6));
    CHECK(cfg.macro_sizes == std::vector<double>{2, 4, 6, 10});
    std::string note;
    CHECK(cfg.cell_solver(&note).preconditioner == Preconditioner::diagonal);
    CHECK(note.empty());
}

TEST_CASE("paper inclusion model switches the cell solver") {
    const RunConfig cfg = parse(std::string(kLattice) + "[solver]\nrel_tol = 1e-6\n" +
                                "[output]\ndirectory = x\n");
    CHECK(cfg.solver.rel_tol == 1e-6);
    RunConfig paper = cfg;
    paper.inclusion_model = InclusionModel::paper;
    CHECK(paper.material().youngs_inclusion == 1e-30);
    std::string note;
    CHECK(paper.cell_solver(&note).preconditioner == Preconditioner::cholesky);
    CHECK_FALSE(note.empty());
}

TEST_CASE("config errors carry line numbers") {
    auto line_of = [](const std::string& text) {
        try {
            parse(text);
        } catch (const ConfigError& e) {
            return e.line();
        }
        return -1;
    };
    CHECK(line_of(std::string(kLattice) + "bogus = 1\n") == 11);
    CHECK(line_of("[geometry]\ncell_size = abc\nwall_thickness = 0.1\n") == 2);
    CHECK(line_of(std::string(kLattice) + "[extras]\nx = 1\n") == 11);
    CHECK(line_of(std::string(kLattice) + "[solver]\npreconditioner = ilu\n") == 12);
    CHECK(line_of(std::string(kLattice) + "[validate]\nthetas = 0, 0.5\n") == 12);
    CHECK(line_of(std::string(kLattice) + "[material]\n") == 11); // duplicate section
}

TEST_CASE("missing keys are named") {
    try {
        parse("[geometry]\ncell_size = 1\nwall_thickness = 0.1\n[material]\nyoungs_matrix = 100\n");
        FAIL("no error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("material.poisson_matrix") != std::string::npos);
    }
    const fs::path dir = testing::scratch_dir("missing");
    write(dir / "c.ini", "[geometry]\ncell_size = 1\nwall_thickness = 0.1\n");
    std::string err;
    CHECK(run({"homogenize", "-c", (dir / "c.ini").string(), "--output", (dir / "o").string()}, &err) == 2);
    CHECK(err.find("material.youngs_matrix") != std::string::npos);
}

TEST_CASE("explicit inclusion needs both moduli") {
    CHECK_THROWS_AS(parse(std::string(kLattice) + "[material]\n"), ConfigError);
    const std::string base = "[geometry]\ncell_size = 1\nwall_thickness = 0.1\n[mesh]\nelements_per_cell = 20\n"
                             "[material]\nyoungs_matrix = 100\npoisson_matrix = 0.3\n";
    CHECK_THROWS_AS(parse(base + "inclusion_model = explicit\nyoungs_inclusion = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse(base + "youngs_inclusion = 1\n"), ConfigError);
    const RunConfig cfg = parse(base + "inclusion_model = explicit\nyoungs_inclusion = 2\npoisson_inclusion = 0.1\n");
    CHECK(cfg.material().youngs_inclusion == 2.0);
}

TEST_CASE("command line usage errors") {
    CHECK(run({}) == 2);
    CHECK(run({"homogenize"}) == 2);
    CHECK(run({"frobnicate", "-c", "x.ini"}) == 2);
    CHECK(run({"homogenize", "-c", "/nonexistent/x.ini"}) == 2);
}

TEST_CASE("hashing and number formatting") {
    CHECK(hex_hash(fnv1a("")) == "cbf29ce484222325");
    CHECK(hex_hash(fnv1a("a")) == "af63dc4c8601ec8c");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(-2.5e-7) == "-2.5e-07");
    const RunConfig a = parse(kLattice);
    RunConfig b = a;
    b.macro_sizes = {2};
    CHECK(geometry_hash(a) == geometry_hash(b));
    CHECK(config_hash(a) != config_hash(b));
    b.geometry.cell_size = 2.0;
    CHECK(geometry_hash(a) != geometry_hash(b));
}

TEST_CASE("homogenize writes deterministic tensor files") {
    const fs::path dir = testing::scratch_dir("homogenize");
    write(dir / "lattice.ini", kLattice);
    const std::string cfg = (dir / "lattice.ini").string();
    REQUIRE(run({"homogenize", "-c", cfg, "--output", (dir / "a").string(), "--dump-fields", "--mesh-export", "vtk"}) == 0);
    REQUIRE(run({"homogenize", "-c", cfg, "--output", (dir / "b").string()}) == 0);
    const std::string csv = slurp(dir / "a" / "effective_tensors.csv");
    CHECK(csv == slurp(dir / "b" / "effective_tensors.csv"));
    CHECK(csv.rfind("# gradhom 1.0.0\n# config_hash=", 0) == 0);
    CHECK(slurp(dir / "a" / "report.txt").rfind("# gradhom 1.0.0\n", 0) == 0);
    for (const char* label : {"D_111111", "D_111221", "D_111122", "D_221221", "D_221122", "D_122122", "C_1111"})
        CHECK(csv.find(std::string(",") + label + ",") != std::string::npos);
    CHECK(fs::exists(dir / "a" / "cell_fields.vtk"));
    CHECK(fs::exists(dir / "a" / "rve_mesh.vtk"));

    const TensorFile t = read_effective_csv(dir / "a" / "effective_tensors.csv");
    CHECK(t.D(1, 1) > 0.0);
    CHECK(t.geometry_hash == geometry_hash(load_config(dir / "lattice.ini")));
    CHECK(run({"homogenize", "-c", cfg, "--output", (dir / "c").string(), "--mesh-export", "stl"}) == 2);
}

TEST_CASE("homogeneous config passes the compatibility check") {
    const fs::path dir = testing::scratch_dir("homogeneous");
    write(dir / "h.ini", "[geometry]\ncell_size = 1\nwall_thickness = 0.1\n"
                         "[material]\nyoungs_matrix = 100\npoisson_matrix = 0.3\ninclusion_model = explicit\n"
                         "youngs_inclusion = 100\npoisson_inclusion = 0.3\n[mesh]\nelements_per_cell = 20\n");
    REQUIRE(run({"homogenize", "-c", (dir / "h.ini").string(), "--output", (dir / "o").string()}) == 0);
    CHECK(slurp(dir / "o" / "report.txt").find("compatibility check passed: D ≈ 0") != std::string::npos);
}

TEST_CASE("mesh files resolve relative to the config") {
    const fs::path dir = testing::scratch_dir("meshfile");
    export_mesh(build_square_lattice_rve(CellGeometry{}, 20), dir / "cell.mesh");
    write(dir / "m.ini", "[geometry]\ncell_size = 1\nwall_thickness = 0.1\n"
                         "[material]\nyoungs_matrix = 100\npoisson_matrix = 0.3\n[mesh]\nfile = cell.mesh\n");
    const RunConfig cfg = load_config(dir / "m.ini");
    REQUIRE(cfg.mesh_file);
    CHECK(*cfg.mesh_file == dir / "cell.mesh");
    CHECK(run({"homogenize", "-c", (dir / "m.ini").string(), "--output", (dir / "o").string()}) == 0);
    write(dir / "bad.ini", "[geometry]\ncell_size = 1\nwall_thickness = 0.1\n"
                           "[material]\nyoungs_matrix = 100\npoisson_matrix = 0.3\n[mesh]\nfile = none.mesh\n");
    CHECK(run({"homogenize", "-c", (dir / "bad.ini").string()}) == 2);
}

TEST_CASE("validate emits curves, study rows and stale-tensor warnings") {
    const fs::path dir = testing::scratch_dir("validate");
    write(dir / "v.ini", std::string(kLattice) + "[validate]\nmacro_sizes = 2\nmacro_elements = 8\n");
    REQUIRE(run({"validate", "-c", (dir / "v.ini").string(), "--output", (dir / "o").string()}) == 0);
    int curves = 0;
    for (const auto& e : fs::directory_iterator(dir / "o"))
        if (e.path().filename().string().rfind("curve_", 0) == 0) ++curves;
    CHECK(curves == 3);
    CHECK(data_lines(slurp(dir / "o" / "size_effect.csv")) == 3);
    CHECK(slurp(dir / "o" / "curve_L2_micro.csv").find("theta,energy_mJ\n0,0\n") != std::string::npos);

    // Tensors of a 1 mm cell reused for a 2 mm cell.
    REQUIRE(run({"homogenize", "-c", (dir / "v.ini").string(), "--output", (dir / "h").string()}) == 0);
    write(dir / "stale.ini", "[geometry]\ncell_size = 2.0\nwall_thickness = 0.2\n"
                             "[material]\nyoungs_matrix = 100\npoisson_matrix = 0.3\n"
                             "[mesh]\nelements_per_cell = 20\n"
                             "[validate]\nmacro_sizes = 4\nmacro_elements = 8\ntensors = h/effective_tensors.csv\n");
    REQUIRE(run({"validate", "-c", (dir / "stale.ini").string(), "--output", (dir / "s").string()}) == 0);
    CHECK(slurp(dir / "s" / "validation_report.txt").find("warning: stale tensors") != std::string::npos);
    // Matching tensors give no warning.
    write(dir / "fresh.ini", std::string(kLattice) +
                                 "[validate]\nmacro_sizes = 2\nmacro_elements = 8\ntensors = h/effective_tensors.csv\n");
    REQUIRE(run({"validate", "-c", (dir / "fresh.ini").string(), "--output", (dir / "f").string()}) == 0);
    CHECK(slurp(dir / "f" / "validation_report.txt").find("stale") == std::string::npos);
}

TEST_CASE("study over four sizes emits twelve rows") {
    const fs::path dir = testing::scratch_dir("study");
    write(dir / "v.ini", std::string(kLattice) + "[validate]\nmacro_sizes = 2, 4, 6, 10\nmacro_elements = 8\n");
    REQUIRE(run({"validate", "-c", (dir / "v.ini").string(), "--output", (dir / "o").string()}) == 0);
    CHECK(data_lines(slurp(dir / "o" / "size_effect.csv")) == 12);
}

TEST_CASE("sweep ratios") {
    const fs::path dir = testing::scratch_dir("sweep");
    write(dir / "s.ini", std::string(kLattice) + "[solver]\npreconditioner = cholesky\nrel_tol = 1e-10\n"
                                                 "[sweep]\ncell_sizes = 1, 0.5, 0.2\n");
    REQUIRE(run({"sweep", "-c", (dir / "s.ini").string(), "--output", (dir / "o").string()}) == 0);
    std::istringstream csv(slurp(dir / "o" / "sweep.csv"));
    std::string line;
    int d_rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("cell_size", 0) == 0) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream s(line);
        while (std::getline(s, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5 || cells[1] != "D") continue;
        const double size = std::stod(cells[0]);
        const double ratio = std::stod(cells[4]);
        CHECK(ratio == doctest::Approx(size * size).epsilon(1e-6));
        ++d_rows;
    }
    CHECK(d_rows >= 3 * 6);

    write(dir / "one.ini", std::string(kLattice) + "[sweep]\ncell_sizes = 1\n");
    REQUIRE(run({"sweep", "-c", (dir / "one.ini").string(), "--output", (dir / "p").string()}) == 0);
    CHECK(slurp(dir / "p" / "sweep.csv").find("1,D,D_221221,") != std::string::npos);
    CHECK(slurp(dir / "p" / "sweep.csv").find(",1\n") != std::string::npos);

    write(dir / "empty.ini", std::string(kLattice) + "[sweep]\ncell_sizes =\n");
    CHECK(run({"sweep", "-c", (dir / "empty.ini").string(), "--output", (dir / "q").string()}) == 2);
    write(dir / "none.ini", kLattice);
    CHECK(run({"sweep", "-c", (dir / "none.ini").string(), "--output", (dir / "r").string()}) == 2);
}

}
