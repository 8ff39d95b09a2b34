#pragma once

#include "bnp/core_types.hpp"
#include "bnp/harness.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bnp {

/// Config error with a location, e.g. "atc.cfg:4: key 'mu': expected a number".
struct ParseError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<double> parse_numbers(const std::string& text, const std::string& where) {
  std::vector<double> out;
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::istringstream in(norm);
  std::string tok;
  while (in >> tok) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError(where + ": expected a number, got '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<double> parse_fixed(const std::string& text, std::size_t count, const std::string& where) {
  auto v = parse_numbers(text, where);
  if (v.size() != count) throw ParseError(where + ": expected " + std::to_string(count) + " numbers");
  return v;
}

inline std::vector<AgentState> parse_states(const std::string& text, const std::string& where) {
  std::vector<AgentState> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (trim(item).empty()) continue;
    const auto v = parse_fixed(item, 4, where);
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  return out;
}

template <class Int>
Int parse_int(const std::string& text, const std::string& where) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw ParseError(where + ": expected an integer");
  return v;
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << x;
  return os.str();
}

inline std::string fmt_states(const std::vector<AgentState>& states) {
  std::string s;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (i) s += "; ";
    const auto& a = states[i];
    s += fmt(a.px) + " " + fmt(a.py) + " " + fmt(a.v) + " " + fmt(a.theta);
  }
  return s;
}

}  // namespace detail

/// Parses `key = value` lines ('#' starts a comment). Keys are the Scenario field
/// names plus the generation parameters seed, jitter and start_speed. When starts
/// and targets are both omitted they are sampled from (seed, N).
inline Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<config>") {
  Scenario sc;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string loc = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ParseError(loc + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string val = detail::trim(std::string_view(line).substr(eq + 1));
    const std::string where = loc + ": key '" + key + "'";
    if (!seen.insert(key).second) throw ParseError(where + ": duplicate key");
    auto num = [&] { return detail::parse_fixed(val, 1, where)[0]; };

    if (key == "N") sc.N = detail::parse_int<int>(val, where);
    else if (key == "dt") sc.dt = num();
    else if (key == "T") sc.T = detail::parse_int<int>(val, where);
    else if (key == "starts") sc.starts = detail::parse_states(val, where);
    else if (key == "targets") sc.targets = detail::parse_states(val, where);
    else if (key == "zone_center") {
      const auto v = detail::parse_fixed(val, 2, where);
      sc.zone_center = {v[0], v[1]};
    } else if (key == "zone_radius") sc.zone_radius = num();
    else if (key == "d_col") sc.d_col = num();
    else if (key == "d_plan") sc.d_plan = num();
    else if (key == "mu") sc.mu = num();
    else if (key == "w_track") {
      const auto v = detail::parse_fixed(val, 3, where);
      sc.w_track = {v[0], v[1], v[2]};
    } else if (key == "w_ctrl") {
      const auto v = detail::parse_fixed(val, 2, where);
      sc.w_ctrl = {v[0], v[1]};
    } else if (key == "timeout") sc.timeout = num();
    else if (key == "arrive_radius") sc.arrive_radius = num();
    else if (key == "control_bounds") {
      if (val == "none") {
        sc.control_bounds.reset();
      } else {
        const auto v = detail::parse_fixed(val, 4, where);
        sc.control_bounds = ControlBounds{v[0], v[1], v[2], v[3]};
      }
    } else if (key == "seed") sc.seed = detail::parse_int<std::uint64_t>(val, where);
    else if (key == "jitter") sc.jitter = num();
    else if (key == "start_speed") sc.start_speed = num();
    else throw ParseError(where + ": unknown key");
  }

  const bool has_starts = seen.contains("starts");
  const bool has_targets = seen.contains("targets");
  if (has_starts != has_targets) throw ParseError(origin + ": starts and targets must be given together");
  if (!has_starts) {
    if (sc.N < 2) throw ParseError(origin + ": starts/targets are required when N < 2");
    sc = sample_scenario(sc.seed, sc.N, sc);
  }
  try {
    sc.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return sc;
}

inline Scenario parse_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open scenario file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_scenario_text(ss.str(), path);
}

/// Writes every field so that parsing the output reproduces `sc` exactly.
inline std::string emit_scenario(const Scenario& sc) {
  using detail::fmt;
  std::ostringstream os;
  os << "N = " << sc.N << "\n";
  os << "dt = " << fmt(sc.dt) << "\n";
  os << "T = " << sc.T << "\n";
  os << "starts = " << detail::fmt_states(sc.starts) << "\n";
  os << "targets = " << detail::fmt_states(sc.targets) << "\n";
  os << "zone_center = " << fmt(sc.zone_center[0]) << " " << fmt(sc.zone_center[1]) << "\n";
  os << "zone_radius = " << fmt(sc.zone_radius) << "\n";
  os << "d_col = " << fmt(sc.d_col) << "\n";
  os << "d_plan = " << fmt(sc.d_plan) << "\n";
  os << "mu = " << fmt(sc.mu) << "\n";
  os << "w_track = " << fmt(sc.w_track.pos) << " " << fmt(sc.w_track.v) << " " << fmt(sc.w_track.theta) << "\n";
  os << "w_ctrl = " << fmt(sc.w_ctrl.a) << " " << fmt(sc.w_ctrl.omega) << "\n";
  os << "timeout = " << fmt(sc.timeout) << "\n";
  os << "arrive_radius = " << fmt(sc.arrive_radius) << "\n";
  if (sc.control_bounds) {
    const auto& b = *sc.control_bounds;
    os << "control_bounds = " << fmt(b.a_min) << " " << fmt(b.a_max) << " " << fmt(b.omega_min) << " "
       << fmt(b.omega_max) << "\n";
  } else {
    os << "control_bounds = none\n";
  }
  os << "seed = " << sc.seed << "\n";
  os << "jitter = " << fmt(sc.jitter) << "\n";
  os << "start_speed = " << fmt(sc.start_speed) << "\n";
  return os.str();
}

}  // namespace bnp
