#ifndef SCN_CONFIG_TEXT_HPP
#define SCN_CONFIG_TEXT_HPP

#include <string>
#include <vector>

#include "scn/common.hpp"

namespace scn::configtext {

// Flat `key = value` text grouped under `[section]` headers. `#` starts a
// comment. Keys may repeat within a section (used for ordered lists).

struct Entry {
  std::string key;
  std::string value;
};

struct Section {
  std::string name;
  std::vector<Entry> entries;

  const std::string* find(const std::string& key) const;
  std::vector<std::string> find_all(const std::string& key) const;
};

struct Document {
  std::vector<Section> sections;

  const Section* find(const std::string& name) const;
  Section& get_or_add(const std::string& name);
};

Document parse(const std::string& text);
std::string serialize(const Document& doc);

// Shortest decimal form that parses back to the same value.
std::string format_real(Real v);

Real parse_real(const std::string& s, const std::string& context);
long parse_int(const std::string& s, const std::string& context);
bool parse_bool(const std::string& s, const std::string& context);

} // namespace scn::configtext

#endif
