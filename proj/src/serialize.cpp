#include "isolab/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "isolab/util.hpp"

namespace isolab {

using nlohmann::json;

json grid_to_json(const ConformalGrid& g) {
  json j;
  j["width"] = g.width();
  j["height"] = g.height();
  j["h"] = g.spacing();
  j["boundary_mode"] = g.boundary_mode() == BoundaryMode::periodic ? "periodic" : "open";
  j["phi"] = g.phi_values();
  return j;
}

ConformalGrid grid_from_json(const json& j) {
  for (const char* key : {"width", "height", "h", "boundary_mode", "phi"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("grid document missing field '") + key + "'");
  }
  const int width = j.at("width").get<int>();
  const int height = j.at("height").get<int>();
  const double h = j.at("h").get<double>();
  const std::string mode_name = j.at("boundary_mode").get<std::string>();
  BoundaryMode mode;
  if (mode_name == "open") {
    mode = BoundaryMode::open;
  } else if (mode_name == "periodic") {
    mode = BoundaryMode::periodic;
  } else {
    throw std::invalid_argument("grid document has unknown boundary_mode '" + mode_name + "'");
  }
  std::vector<double> phi = j.at("phi").get<std::vector<double>>();
  return ConformalGrid::from_phi(width, height, h, mode, std::move(phi));
}

std::string grid_to_string(const ConformalGrid& g) { return grid_to_json(g).dump(2) + "\n"; }

ConformalGrid grid_from_string(const std::string& text) { return grid_from_json(json::parse(text)); }

json set_to_json(const IndicatorSet& s) {
  json rows = json::array();
  for (int y = 0; y < s.height(); ++y) {
    std::vector<int> runs;
    bool inside = false;  // runs start with the outside span, possibly zero
    int run = 0;
    for (int x = 0; x < s.width(); ++x) {
      const bool member = s.contains(Cell{x, y});
      if (member == inside) {
        ++run;
      } else {
        runs.push_back(run);
        inside = member;
        run = 1;
      }
    }
    runs.push_back(run);
    rows.push_back(runs);
  }
  json j;
  j["grid_id"] = s.grid_id();
  j["width"] = s.width();
  j["height"] = s.height();
  j["rows"] = rows;
  return j;
}

IndicatorSet set_from_json(const json& j, const ConformalGrid& g) {
  for (const char* key : {"grid_id", "width", "height", "rows"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("set document missing field '") + key + "'");
  }
  if (j.at("grid_id").get<std::uint64_t>() != g.id())
    throw std::invalid_argument("set document belongs to a different grid");
  if (j.at("width").get<int>() != g.width() || j.at("height").get<int>() != g.height())
    throw std::invalid_argument("set document shape does not match grid");
  const json& rows = j.at("rows");
  if (static_cast<int>(rows.size()) != g.height())
    throw std::invalid_argument("set document row count does not match grid");
  std::vector<Cell> cells;
  for (int y = 0; y < g.height(); ++y) {
    bool inside = false;
    int x = 0;
    for (const auto& run_j : rows.at(y)) {
      const int run = run_j.get<int>();
      if (run < 0) throw std::invalid_argument("set document has a negative run length");
      if (inside)
        for (int i = 0; i < run; ++i) cells.push_back(Cell{x + i, y});
      x += run;
      inside = !inside;
    }
    if (x != g.width()) throw std::invalid_argument("set document row runs do not sum to the width");
  }
  return IndicatorSet::from_cells(g, cells);
}

std::string set_to_string(const IndicatorSet& s) { return set_to_json(s).dump(2) + "\n"; }

IndicatorSet set_from_string(const std::string& text, const ConformalGrid& g) {
  return set_from_json(json::parse(text), g);
}

std::string set_to_pgm(const IndicatorSet& s) {
  std::ostringstream out;
  out << "P2\n" << s.width() << " " << s.height() << "\n1\n";
  for (int y = s.height() - 1; y >= 0; --y) {
    for (int x = 0; x < s.width(); ++x) {
      if (x) out << ' ';
      out << (s.contains(Cell{x, y}) ? 1 : 0);
    }
    out << '\n';
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace isolab
