#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/file_util.hpp"
#include "fcs/rng.hpp"

namespace fcs {

enum class Category { color, texture, art_style, object };

inline constexpr std::array<Category, 4> kCategories = {Category::color, Category::texture, Category::art_style, Category::object};

/// Section name in bank files.
inline std::string_view section_name(Category c) {
  switch (c) {
    case Category::color: return "colors";
    case Category::texture: return "textures";
    case Category::art_style: return "art_styles";
    case Category::object: return "objects";
  }
  return "";
}

/// Short name used in rule specs ("color-texture").
inline std::string_view short_name(Category c) {
  switch (c) {
    case Category::color: return "color";
    case Category::texture: return "texture";
    case Category::art_style: return "art";
    case Category::object: return "object";
  }
  return "";
}

struct KeywordBank {
  std::vector<std::string> colors, textures, art_styles, objects;

  const std::vector<std::string>& list(Category c) const {
    switch (c) {
      case Category::color: return colors;
      case Category::texture: return textures;
      case Category::art_style: return art_styles;
      case Category::object: return objects;
    }
    return colors;
  }
  std::vector<std::string>& list(Category c) { return const_cast<std::vector<std::string>&>(std::as_const(*this).list(c)); }

  void validate() const {
    for (auto c : kCategories) {
      std::unordered_set<std::string> seen;
      for (const auto& k : list(c)) {
        if (k.empty()) fail(Errc::invalid_input, "empty keyword in " + std::string(section_name(c)));
        if (std::any_of(k.begin(), k.end(), [](unsigned char ch) { return std::isupper(ch); }))
          fail(Errc::invalid_input, "keyword '" + k + "' is not lowercase");
        if (!seen.insert(k).second) fail(Errc::duplicate_entry, "keyword '" + k + "' repeated in " + std::string(section_name(c)));
      }
    }
  }
};

/// Combination of one keyword from each listed category, rendered in order
/// (modifier before head). count < 0 takes the full cross product.
struct CombinationRule {
  std::vector<Category> categories;
  long count = -1;

  std::string name() const {
    std::string n;
    for (auto c : categories) n += (n.empty() ? "" : "-") + std::string(short_name(c));
    return n;
  }
};

struct PromptProvenance {
  std::string rule;          // rule name, or the section name for single keywords
  std::vector<int> indices;  // keyword index per category
};

struct PromptCorpus {
  std::vector<std::string> prompts;
  std::vector<PromptProvenance> provenance;
  std::uint64_t seed = 0;
};

inline long combination_space(const KeywordBank& bank, const CombinationRule& rule) {
  long n = 1;
  for (auto c : rule.categories) n *= long(bank.list(c).size());
  return n;
}

/// Corpus = every single keyword, then each rule's sampled combinations
/// (without replacement, seeded), dropping prompts already present.
inline PromptCorpus combine(const KeywordBank& bank, const std::vector<CombinationRule>& rules, std::uint64_t seed) {
  bank.validate();
  PromptCorpus corpus;
  corpus.seed = seed;
  std::unordered_set<std::string> seen;
  auto add = [&](std::string prompt, PromptProvenance prov) {
    if (!seen.insert(prompt).second) return;
    corpus.prompts.push_back(std::move(prompt));
    corpus.provenance.push_back(std::move(prov));
  };
  for (auto c : kCategories) {
    const auto& l = bank.list(c);
    for (std::size_t i = 0; i < l.size(); ++i) add(l[i], {std::string(section_name(c)), {int(i)}});
  }
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& rule = rules[r];
    if (rule.categories.size() < 2) fail(Errc::invalid_config, "rule '" + rule.name() + "' needs at least two categories");
    const long space = combination_space(bank, rule);
    const long count = rule.count < 0 ? space : rule.count;
    if (count > space)
      fail(Errc::invalid_config, "rule '" + rule.name() + "' asks for " + std::to_string(count) + " prompts but only " +
                                     std::to_string(space) + " combinations exist");
    std::vector<long> picks(static_cast<std::size_t>(space));
    std::iota(picks.begin(), picks.end(), 0L);
    if (count < space) {
      Rng rng(derive_seed(seed, fnv1a64("rule"), std::uint64_t(r)));
      for (long i = 0; i < count; ++i) {  // partial Fisher-Yates
        const long j = i + long(std::uniform_int_distribution<long>(0, space - 1 - i)(rng));
        std::swap(picks[std::size_t(i)], picks[std::size_t(j)]);
      }
      picks.resize(std::size_t(count));
      std::sort(picks.begin(), picks.end());
    }
    for (long flat : picks) {
      PromptProvenance prov{rule.name(), std::vector<int>(rule.categories.size())};
      std::string prompt;
      for (std::size_t k = rule.categories.size(); k-- > 0;) {
        const auto& l = bank.list(rule.categories[k]);
        prov.indices[k] = int(flat % long(l.size()));
        flat /= long(l.size());
      }
      for (std::size_t k = 0; k < rule.categories.size(); ++k)
        prompt += (k ? " " : "") + bank.list(rule.categories[k])[std::size_t(prov.indices[k])];
      add(std::move(prompt), std::move(prov));
    }
  }
  return corpus;
}

/// "color-texture" or "color-texture:924".
inline CombinationRule parse_rule(const std::string& spec) {
  CombinationRule rule;
  std::string cats = spec;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    cats = spec.substr(0, colon);
    try {
      rule.count = std::stol(spec.substr(colon + 1));
    } catch (const std::exception&) {
      fail(Errc::invalid_config, "bad count in rule '" + spec + "'");
    }
  }
  std::istringstream in(cats);
  std::string part;
  while (std::getline(in, part, '-')) {
    bool found = false;
    for (auto c : kCategories)
      if (part == short_name(c)) rule.categories.push_back(c), found = true;
    if (!found) fail(Errc::invalid_config, "unknown category '" + part + "' in rule '" + spec + "'");
  }
  return rule;
}

/// Shipped keyword lists (44 colors, 21 textures, 5 art styles, 34 objects).
/// Only a handful of entries per list are attested; the rest are curated to
/// reach the stated counts with no keyword shared between lists.
inline KeywordBank default_bank() {
  KeywordBank b;
  b.colors = {"red",     "blue",    "green",   "yellow",   "orange",   "purple",    "pink",    "brown",   "black",
              "white",   "gray",    "cyan",    "magenta",  "maroon",   "navy",      "teal",    "olive",   "lime",
              "indigo",  "violet",  "turquoise", "beige",  "crimson",  "scarlet",   "gold",    "silver",  "bronze",
              "lavender", "coral",  "salmon",  "peach",    "mint",     "emerald",   "amber",   "ivory",   "khaki",
              "plum",    "rust",    "ochre",   "azure",    "cobalt",   "charcoal",  "burgundy", "tan"};
  b.textures = {"lines",   "cracked",     "knitted", "dotted",      "striped", "checkered", "woven",
                "wrinkled", "marbled",    "bubbly",  "braided",     "crystalline", "fibrous", "grid",
                "honeycombed", "lacelike", "meshed", "porous",      "scaly",   "swirly",    "zigzagged"};
  b.art_styles = {"mosaic", "watercolor", "acrylic", "pointillism", "sketch"};
  b.objects = {"stone wall", "wave",    "snow",   "fire",     "brick wall", "wood",     "grass",  "clouds", "ice",
               "sand",       "water",   "leaves", "lava",     "flames",     "magma",    "tree bark", "moss", "rock",
               "desert",     "ocean",   "sky",    "galaxy",   "flowers",    "feathers", "fur",    "glass",  "metal",
               "smoke",      "lightning", "rain", "jungle",   "canyon",     "waterfall", "sunset"};
  return b;
}

/// Full crosses of the five pair categories (2,915 prompts plus 104 singles)
/// and 1,283 sampled color-art-texture triples, totalling 4,302 with the
/// default bank.
inline std::vector<CombinationRule> default_rules() {
  using C = Category;
  return {{{C::color, C::texture}, -1}, {{C::color, C::art_style}, -1}, {{C::color, C::object}, -1},
          {{C::art_style, C::texture}, -1}, {{C::art_style, C::object}, -1},
          {{C::color, C::art_style, C::texture}, 1283}};
}

/// Bank file: `[colors]`, `[textures]`, `[art_styles]`, `[objects]` sections,
/// one keyword per line; blank lines and `#` comments ignored.
inline KeywordBank parse_bank(const std::string& text, const std::string& origin = "bank") {
  KeywordBank bank;
  std::vector<std::string>* current = nullptr;
  std::set<std::string> seen_sections;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    std::string entry = line.substr(b, e - b + 1);
    if (entry.front() == '[') {
      if (entry.back() != ']') fail(Errc::parse_error, where() + "malformed section header '" + entry + "'");
      const std::string name = entry.substr(1, entry.size() - 2);
      current = nullptr;
      for (auto c : kCategories)
        if (name == section_name(c)) current = &bank.list(c);
      if (!current) fail(Errc::parse_error, where() + "unknown category header '" + entry + "'");
      if (!seen_sections.insert(name).second) fail(Errc::parse_error, where() + "section '" + entry + "' appears twice");
      continue;
    }
    if (!current) fail(Errc::parse_error, where() + "keyword outside of any section");
    std::transform(entry.begin(), entry.end(), entry.begin(), [](unsigned char ch) { return char(std::tolower(ch)); });
    if (std::find(current->begin(), current->end(), entry) != current->end())
      fail(Errc::duplicate_entry, where() + "duplicate entry '" + entry + "'");
    current->push_back(std::move(entry));
  }
  return bank;
}

inline KeywordBank load_bank(const std::filesystem::path& path) { return parse_bank(read_file(path), path.string()); }

inline std::string serialize_bank(const KeywordBank& bank) {
  std::string out;
  for (auto c : kCategories) {
    out += "[" + std::string(section_name(c)) + "]\n";
    for (const auto& k : bank.list(c)) out += k + "\n";
  }
  return out;
}

inline void save_corpus(const PromptCorpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& p : corpus.prompts) out += p + "\n";
  write_file_atomic(path, out);
}

/// One prompt per line; blank lines skipped.
inline std::vector<std::string> load_prompts(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> prompts;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) prompts.push_back(line);
  }
  return prompts;
}

}  // namespace fcs
