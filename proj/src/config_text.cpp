#include "scn/config_text.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace scn::configtext {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

const std::string* Section::find(const std::string& key) const {
  for (const auto& e : entries)
    if (e.key == key) return &e.value;
  return nullptr;
}

std::vector<std::string> Section::find_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.key == key) out.push_back(e.value);
  return out;
}

const Section* Document::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

Section& Document::get_or_add(const std::string& name) {
  for (auto& s : sections)
    if (s.name == name) return s;
  sections.push_back(Section{name, {}});
  return sections.back();
}

Document parse(const std::string& text) {
  Document doc;
  Section* current = nullptr;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header");
      doc.sections.push_back(Section{trim(line.substr(1, line.size() - 2)), {}});
      current = &doc.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    if (!current)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": entry before any [section] header");
    current->entries.push_back(
        Entry{trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return doc;
}

std::string serialize(const Document& doc) {
  std::string out;
  for (std::size_t i = 0; i < doc.sections.size(); ++i) {
    if (i > 0) out += "\n";
    out += "[" + doc.sections[i].name + "]\n";
    for (const auto& e : doc.sections[i].entries)
      out += e.key + " = " + e.value + "\n";
  }
  return out;
}

std::string format_real(Real v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, static_cast<double>(v));
    if (static_cast<Real>(std::strtod(buf, nullptr)) == v) return buf;
  }
  return buf;
}

Real parse_real(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError(context + ": expected a number, got '" + s + "'");
  return static_cast<Real>(v);
}

long parse_int(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError(context + ": expected an integer, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& context) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(context + ": expected a boolean, got '" + s + "'");
}

} // namespace scn::configtext
