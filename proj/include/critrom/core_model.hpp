#pragma once

// Reactor geometry, materials and control-rod homogenisation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "critrom/errors.hpp"

namespace critrom {

/// Macroscopic one-group material data, all in 1/cm except nu.
struct CrossSectionSet {
  double sigma_a = 0.0;
  double sigma_s = 0.0;
  double sigma_f = 0.0;
  double nu = 1.0;

  friend bool operator==(const CrossSectionSet&, const CrossSectionSet&) = default;
};

enum class Boundary { reflective, bare };

/// Exterior edge index into Geometry::boundary.
enum Edge : std::size_t { kLeft = 0, kRight = 1, kBottom = 2, kTop = 3 };

/// Axis-aligned extent; for 1D cases y0/y1 are ignored.
struct Box {
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
};

struct Geometry {
  int dims = 1;
  std::size_t nx = 0;
  std::size_t ny = 1;
  double dx = 1.0;
  double dy = 1.0;
  std::vector<std::string> material_names;
  std::vector<int> cell_material;  // index into material_names, per interior cell
  std::vector<std::vector<std::size_t>> rod_regions;
  std::array<Boundary, 4> boundary{Boundary::bare, Boundary::bare, Boundary::bare,
                                   Boundary::bare};

  std::size_t cell_count() const { return nx * ny; }
  std::size_t index(std::size_t i, std::size_t j) const { return j * nx + i; }
  std::pair<double, double> cell_center(std::size_t c) const {
    const std::size_t i = c % nx;
    const std::size_t j = c / nx;
    return {(static_cast<double>(i) + 0.5) * dx, (static_cast<double>(j) + 0.5) * dy};
  }
  const std::string& material_of(std::size_t c) const {
    return material_names.at(static_cast<std::size_t>(cell_material.at(c)));
  }
};

/// Rod-insertion fractions, one per rod region.
struct RodConfig {
  std::vector<double> z;
};

/// Per-interior-cell materials and diffusion coefficients.
struct MaterialField {
  std::vector<CrossSectionSet> xs;
  std::vector<double> diffusion;
};

/// A fully resolved test case: mesh, material table and rod mixing recipe.
struct CaseDefinition {
  std::string name;
  Geometry geometry;
  std::map<std::string, CrossSectionSet> materials;
  std::string rod_base;      // material mixed with the absorber in rod regions
  std::string rod_absorber;  // the control-rod material
};

// ---------------------------------------------------------------------------
// Homogenisation

namespace detail {
inline void require_fraction(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DomainError(std::string(what) + " must lie in [0,1], got " + std::to_string(v));
  }
}
}  // namespace detail

/// Converts an insertion fraction z into the convex mixing weight r. Averaging
/// reciprocal absorption with weight z is equivalent to averaging the
/// cross-sections themselves with weight r.
inline double mixing_coefficient(double z, double sigma_a_base, double sigma_a_cr) {
  detail::require_fraction(z, "insertion fraction z");
  if (!(sigma_a_base > 0.0) || !(sigma_a_cr > 0.0)) {
    throw DomainError("mixing_coefficient: absorption cross-sections must be positive");
  }
  if (z == 0.0) return 0.0;
  if (z == 1.0) return 1.0;
  const double num = z * sigma_a_base;
  return num / (num + (1.0 - z) * sigma_a_cr);
}

/// Inverse of mixing_coefficient: the insertion fraction that yields weight r.
inline double insertion_from_mixing(double r, double sigma_a_base, double sigma_a_cr) {
  detail::require_fraction(r, "mixing coefficient r");
  if (!(sigma_a_base > 0.0) || !(sigma_a_cr > 0.0)) {
    throw DomainError("insertion_from_mixing: absorption cross-sections must be positive");
  }
  if (r == 0.0) return 0.0;
  if (r == 1.0) return 1.0;
  const double num = r * sigma_a_cr;
  return num / (num + (1.0 - r) * sigma_a_base);
}

/// Convex blend r*cr + (1-r)*base of every cross-section field.
inline CrossSectionSet homogenize(double r, const CrossSectionSet& cr,
                                  const CrossSectionSet& base) {
  detail::require_fraction(r, "mixing coefficient r");
  if (r == 0.0) return base;
  if (r == 1.0) return cr;
  auto mix = [r](double a, double b) { return r * a + (1.0 - r) * b; };
  return {mix(cr.sigma_a, base.sigma_a), mix(cr.sigma_s, base.sigma_s),
          mix(cr.sigma_f, base.sigma_f), mix(cr.nu, base.nu)};
}

inline double diffusion_coefficient(const CrossSectionSet& xs) {
  const double total = xs.sigma_a + xs.sigma_s;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DomainError("diffusion_coefficient: sigma_a + sigma_s must be positive");
  }
  return 1.0 / (3.0 * total);
}

inline MaterialField build_material_field(const CaseDefinition& c, const RodConfig& config) {
  const Geometry& g = c.geometry;
  if (config.z.size() != g.rod_regions.size()) {
    throw ConfigError("rod config has " + std::to_string(config.z.size()) +
                      " entries, case '" + c.name + "' has " +
                      std::to_string(g.rod_regions.size()) + " rod regions");
  }
  auto lookup = [&](const std::string& name) -> const CrossSectionSet& {
    auto it = c.materials.find(name);
    if (it == c.materials.end()) {
      throw ConfigError("case '" + c.name + "': missing material '" + name + "'");
    }
    return it->second;
  };

  std::vector<const CrossSectionSet*> by_index;
  by_index.reserve(g.material_names.size());
  for (const auto& name : g.material_names) by_index.push_back(&lookup(name));

  MaterialField field;
  field.xs.resize(g.cell_count());
  for (std::size_t cell = 0; cell < g.cell_count(); ++cell) {
    field.xs[cell] = *by_index.at(static_cast<std::size_t>(g.cell_material[cell]));
  }

  if (!g.rod_regions.empty()) {
    const CrossSectionSet& base = lookup(c.rod_base);
    const CrossSectionSet& cr = lookup(c.rod_absorber);
    for (std::size_t k = 0; k < g.rod_regions.size(); ++k) {
      const double r = mixing_coefficient(config.z[k], base.sigma_a, cr.sigma_a);
      const CrossSectionSet mixed = homogenize(r, cr, base);
      for (std::size_t cell : g.rod_regions[k]) field.xs[cell] = mixed;
    }
  }

  field.diffusion.resize(g.cell_count());
  for (std::size_t cell = 0; cell < g.cell_count(); ++cell) {
    field.diffusion[cell] = diffusion_coefficient(field.xs[cell]);
  }
  return field;
}

// ---------------------------------------------------------------------------
// Declarative case description

/// Everything needed to lay out a case; turned into a CaseDefinition by
/// build_case. Zones are painted in order over the background material, so
/// later zones win. Rod cells are those whose centre lies inside a rod box.
struct CaseSpec {
  std::string name;
  int dims = 1;
  double length_x = 0.0;
  double length_y = 1.0;
  std::size_t cells_x = 0;
  std::size_t cells_y = 1;
  std::map<std::string, CrossSectionSet> materials;
  std::string background;
  std::vector<std::pair<std::string, Box>> zones;
  std::vector<Box> rods;
  std::string rod_base;
  std::string rod_absorber;
  std::array<Boundary, 4> boundary{Boundary::bare, Boundary::bare, Boundary::bare,
                                   Boundary::bare};
};

inline CaseDefinition build_case(const CaseSpec& spec) {
  if (spec.dims != 1 && spec.dims != 2) throw ConfigError("dims must be 1 or 2");
  if (spec.cells_x == 0 || (spec.dims == 2 && spec.cells_y == 0)) {
    throw ConfigError("cell counts must be positive");
  }
  if (!(spec.length_x > 0.0) || (spec.dims == 2 && !(spec.length_y > 0.0))) {
    throw ConfigError("domain lengths must be positive");
  }
  if (!spec.materials.count(spec.background)) {
    throw ConfigError("background material '" + spec.background + "' is not defined");
  }

  CaseDefinition out;
  out.name = spec.name;
  out.materials = spec.materials;
  out.rod_base = spec.rod_base;
  out.rod_absorber = spec.rod_absorber;

  Geometry& g = out.geometry;
  g.dims = spec.dims;
  g.nx = spec.cells_x;
  g.ny = spec.dims == 1 ? 1 : spec.cells_y;
  g.dx = spec.length_x / static_cast<double>(g.nx);
  g.dy = spec.dims == 1 ? 1.0 : spec.length_y / static_cast<double>(g.ny);
  g.boundary = spec.boundary;

  for (const auto& [name, xs] : spec.materials) {
    (void)xs;
    g.material_names.push_back(name);
  }
  auto material_index = [&](const std::string& name) {
    auto it = std::find(g.material_names.begin(), g.material_names.end(), name);
    if (it == g.material_names.end()) {
      throw ConfigError("zone references undefined material '" + name + "'");
    }
    return static_cast<int>(it - g.material_names.begin());
  };

  auto inside = [&](const Box& b, std::size_t cell) {
    auto [x, y] = g.cell_center(cell);
    const bool in_x = x >= b.x0 && x <= b.x1;
    return spec.dims == 1 ? in_x : (in_x && y >= b.y0 && y <= b.y1);
  };

  g.cell_material.assign(g.cell_count(), material_index(spec.background));
  for (const auto& [name, box] : spec.zones) {
    const int idx = material_index(name);
    for (std::size_t cell = 0; cell < g.cell_count(); ++cell) {
      if (inside(box, cell)) g.cell_material[cell] = idx;
    }
  }

  std::vector<int> owner(g.cell_count(), -1);
  for (std::size_t k = 0; k < spec.rods.size(); ++k) {
    std::vector<std::size_t> cells;
    for (std::size_t cell = 0; cell < g.cell_count(); ++cell) {
      if (!inside(spec.rods[k], cell)) continue;
      if (owner[cell] >= 0) {
        throw ConfigError("rod regions " + std::to_string(owner[cell]) + " and " +
                          std::to_string(k) + " overlap");
      }
      owner[cell] = static_cast<int>(k);
      cells.push_back(cell);
    }
    if (cells.empty()) {
      throw ConfigError("rod region " + std::to_string(k) + " contains no cell centres");
    }
    g.rod_regions.push_back(std::move(cells));
  }

  if (!spec.rods.empty()) {
    if (!spec.materials.count(spec.rod_base) || !spec.materials.count(spec.rod_absorber)) {
      throw ConfigError("rod_base / rod_absorber must name defined materials");
    }
    const int base_idx = material_index(spec.rod_base);
    for (const auto& region : g.rod_regions) {
      for (std::size_t cell : region) g.cell_material[cell] = base_idx;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in presets

/// 10 cm slab, 100 cells, fuel with two thin rod regions.
inline CaseSpec slab1d_spec() {
  CaseSpec s;
  s.name = "slab1d";
  s.dims = 1;
  s.length_x = 10.0;
  s.cells_x = 100;
  s.materials = {{"fuel", {0.45, 2.0, 0.5, 1.0}}, {"control_rod", {0.9, 2.0, 0.0, 1.0}}};
  s.background = "fuel";
  s.rods = {{2.2, 2.5, 0.0, 0.0}, {7.5, 7.8, 0.0, 0.0}};
  s.rod_base = "fuel";
  s.rod_absorber = "control_rod";
  return s;
}

/// 90 cm square core: graphite reflector around a fuel block holding four
/// 10 cm rod regions of water/absorber mixture. `scale` shrinks the cell
/// count (90 * scale per side) while keeping physical dimensions.
inline CaseSpec core2d_spec(double scale = 1.0) {
  if (!(scale > 0.0 && scale <= 1.0)) throw ConfigError("scale must lie in (0,1]");
  CaseSpec s;
  s.name = "core2d";
  s.dims = 2;
  s.length_x = 90.0;
  s.length_y = 90.0;
  const auto cells = static_cast<std::size_t>(std::lround(90.0 * scale));
  s.cells_x = std::max<std::size_t>(cells, 9);
  s.cells_y = s.cells_x;
  s.materials = {{"fuel", {0.075, 0.53, 0.79, 1.0}},
                 {"water", {0.01, 0.89, 0.0, 1.0}},
                 {"control_rod", {0.38, 0.2, 0.0, 1.0}},
                 {"graphite", {0.15, 0.5, 0.0, 1.0}}};
  s.background = "graphite";
  s.zones = {{"fuel", {10.0, 70.0, 20.0, 80.0}}};
  s.rods = {{20.0, 30.0, 30.0, 40.0},
            {50.0, 60.0, 30.0, 40.0},
            {20.0, 30.0, 60.0, 70.0},
            {50.0, 60.0, 60.0, 70.0}};
  s.rod_base = "water";
  s.rod_absorber = "control_rod";
  return s;
}

// ---------------------------------------------------------------------------
// Key/value case files
//
//   # comment
//   name = mycase
//   dims = 2
//   length = 90 90          (x [y])
//   cells = 90 90           (x [y])
//   material.fuel = 0.075 0.53 0.79 [nu]
//   background = graphite
//   zone = fuel 10 70 20 80 (material x0 x1 [y0 y1]; repeatable, later wins)
//   rod = 20 30 30 40       (x0 x1 [y0 y1]; repeatable, order = z order)
//   rod_base = water
//   rod_absorber = control_rod
//   boundary = bare         (all edges) or boundary.left = reflective

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_numbers(const std::string& value, const std::string& key) {
  std::istringstream in(value);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': '" + tok + "' is not a number");
    }
  }
  return out;
}

inline Boundary parse_boundary(const std::string& v) {
  if (v == "bare" || v == "vacuum") return Boundary::bare;
  if (v == "reflective") return Boundary::reflective;
  throw ConfigError("unknown boundary type '" + v + "'");
}

inline Box parse_box(const std::vector<double>& v, int dims, const std::string& key) {
  const std::size_t need = dims == 1 ? 2 : 4;
  if (v.size() != need) {
    throw ConfigError("key '" + key + "' expects " + std::to_string(need) + " numbers");
  }
  Box b{v[0], v[1], 0.0, 0.0};
  if (dims == 2) {
    b.y0 = v[2];
    b.y1 = v[3];
  }
  return b;
}

}  // namespace detail

inline CaseSpec parse_case_config(std::istream& in) {
  CaseSpec s;
  bool have_dims = false;
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    entries.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  for (const auto& [key, value] : entries) {
    if (key == "dims") {
      s.dims = static_cast<int>(detail::parse_numbers(value, key).at(0));
      have_dims = true;
    }
  }
  if (!have_dims) throw ConfigError("case file is missing 'dims'");

  for (const auto& [key, value] : entries) {
    if (key == "dims") continue;
    if (key == "name") {
      s.name = value;
    } else if (key == "length" || key == "cells") {
      auto v = detail::parse_numbers(value, key);
      if (v.size() != static_cast<std::size_t>(s.dims)) {
        throw ConfigError("key '" + key + "' expects one number per dimension");
      }
      if (key == "length") {
        s.length_x = v[0];
        if (s.dims == 2) s.length_y = v[1];
      } else {
        s.cells_x = static_cast<std::size_t>(v[0]);
        if (s.dims == 2) s.cells_y = static_cast<std::size_t>(v[1]);
      }
    } else if (key.rfind("material.", 0) == 0) {
      auto v = detail::parse_numbers(value, key);
      if (v.size() != 3 && v.size() != 4) {
        throw ConfigError("key '" + key + "' expects sigma_a sigma_s sigma_f [nu]");
      }
      CrossSectionSet xs{v[0], v[1], v[2], v.size() == 4 ? v[3] : 1.0};
      if (xs.sigma_a < 0 || xs.sigma_s < 0 || xs.sigma_f < 0 || xs.nu < 0) {
        throw ConfigError("key '" + key + "': cross-sections must be non-negative");
      }
      s.materials[key.substr(9)] = xs;
    } else if (key == "background") {
      s.background = value;
    } else if (key == "zone") {
      std::istringstream zin(value);
      std::string mat;
      zin >> mat;
      std::string rest;
      std::getline(zin, rest);
      s.zones.emplace_back(mat, detail::parse_box(detail::parse_numbers(rest, key), s.dims, key));
    } else if (key == "rod") {
      s.rods.push_back(detail::parse_box(detail::parse_numbers(value, key), s.dims, key));
    } else if (key == "rod_base") {
      s.rod_base = value;
    } else if (key == "rod_absorber") {
      s.rod_absorber = value;
    } else if (key == "boundary") {
      s.boundary.fill(detail::parse_boundary(value));
    } else if (key.rfind("boundary.", 0) == 0) {
      static const std::map<std::string, Edge> edges{
          {"left", kLeft}, {"right", kRight}, {"bottom", kBottom}, {"top", kTop}};
      auto it = edges.find(key.substr(9));
      if (it == edges.end()) throw ConfigError("unknown edge in '" + key + "'");
      s.boundary[it->second] = detail::parse_boundary(value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  return s;
}

inline CaseSpec load_case_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open case file '" + path + "'");
  return parse_case_config(in);
}

/// Resolves "slab1d", "core2d" or a path to a case file.
inline CaseDefinition resolve_case(const std::string& name_or_path, double scale = 1.0) {
  if (name_or_path == "slab1d") return build_case(slab1d_spec());
  if (name_or_path == "core2d") return build_case(core2d_spec(scale));
  return build_case(load_case_config(name_or_path));
}

}  // namespace critrom
