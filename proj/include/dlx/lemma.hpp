#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>

#include "dlx/error.hpp"
#include "dlx/text.hpp"

namespace dlx {

/// surface form -> lemma; unknown forms map to themselves.
class LemmaTable {
 public:
  LemmaTable() = default;
  explicit LemmaTable(std::unordered_map<std::string, std::string> map) : map_(std::move(map)) {}

  std::string lemma(std::string_view word) const {
    auto it = map_.find(std::string(word));
    return it == map_.end() ? std::string(word) : it->second;
  }

  void set(std::string surface, std::string lemma) { map_[std::move(surface)] = std::move(lemma); }
  std::size_t size() const noexcept { return map_.size(); }

  // TSV: surface<TAB>lemma
  static LemmaTable read(std::istream& in, const std::string& source = "lemmas") {
    LemmaTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = text::strip_cr(line);
      if (view.empty() || view.front() == '#') continue;
      auto f = text::split(view, '\t');
      if (f.size() != 2 || f[0].empty() || f[1].empty()) throw ParseError(source, lineno, "expected surface<TAB>lemma");
      table.set(std::string(f[0]), std::string(f[1]));
    }
    return table;
  }

 private:
  std::unordered_map<std::string, std::string> map_;
};

}  // namespace dlx
