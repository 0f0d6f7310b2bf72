#pragma once

#include <string>

#include <json.hpp>

#include "isolab/manifold.hpp"
#include "isolab/perimeter.hpp"

namespace isolab {

// Grids serialize to a structured-text document with fields
// {width, height, h, boundary_mode, phi} (phi row-major over vertices).
// Floats use shortest round-trip formatting, so load(save(g)) == g exactly.
nlohmann::json grid_to_json(const ConformalGrid& g);
ConformalGrid grid_from_json(const nlohmann::json& j);
std::string grid_to_string(const ConformalGrid& g);
ConformalGrid grid_from_string(const std::string& text);

// Sets serialize as run-length-encoded rows (runs alternate outside/inside
// starting outside; each row's runs sum to the width) plus the owning
// grid's identity token. Loading verifies the shape against the grid.
nlohmann::json set_to_json(const IndicatorSet& s);
IndicatorSet set_from_json(const nlohmann::json& j, const ConformalGrid& g);
std::string set_to_string(const IndicatorSet& s);
IndicatorSet set_from_string(const std::string& text, const ConformalGrid& g);

// Plain PGM (P2, maxval 1) mask; file row 0 is the grid's top row
// (y = height-1). Member cells are 1.
std::string set_to_pgm(const IndicatorSet& s);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace isolab
