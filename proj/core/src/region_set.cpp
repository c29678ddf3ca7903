#include "objattr/region_set.hpp"

#include <bit>
#include <string>

#include "objattr/types.hpp"

namespace objattr {

RegionSet::RegionSet(int universe) : universe_(universe) {
  if (universe < 0) throw InvalidInput("region universe must be non-negative");
  words_.assign((static_cast<std::size_t>(universe) + 63) / 64, 0);
}

RegionSet::RegionSet(int universe, std::initializer_list<int> ids) : RegionSet(universe) {
  for (int id : ids) insert(id);
}

RegionSet RegionSet::full(int universe) {
  RegionSet s(universe);
  for (int i = 0; i < universe; ++i) s.insert(i);
  return s;
}

void RegionSet::check(int id) const {
  if (id < 0 || id >= universe_) {
    throw InvalidInput("region id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(universe_) + ")");
  }
}

bool RegionSet::contains(int id) const {
  check(id);
  return (words_[id / 64] >> (id % 64)) & 1U;
}

void RegionSet::insert(int id) {
  check(id);
  words_[id / 64] |= std::uint64_t{1} << (id % 64);
}

void RegionSet::erase(int id) {
  check(id);
  words_[id / 64] &= ~(std::uint64_t{1} << (id % 64));
}

int RegionSet::count() const {
  int n = 0;
  for (auto w : words_) n += std::popcount(w);
  return n;
}

RegionSet RegionSet::complement() const {
  RegionSet out(universe_);
  for (std::size_t i = 0; i < words_.size(); ++i) out.words_[i] = ~words_[i];
  if (universe_ % 64 != 0 && !out.words_.empty()) {
    out.words_.back() &= (std::uint64_t{1} << (universe_ % 64)) - 1;
  }
  return out;
}

RegionSet RegionSet::with(int id) const {
  RegionSet out = *this;
  out.insert(id);
  return out;
}

bool RegionSet::is_subset_of(const RegionSet& other) const {
  if (other.universe_ != universe_) return false;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if ((words_[i] & ~other.words_[i]) != 0) return false;
  }
  return true;
}

std::vector<int> RegionSet::members() const {
  std::vector<int> out;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    std::uint64_t bits = words_[w];
    while (bits != 0) {
      const int b = std::countr_zero(bits);
      out.push_back(static_cast<int>(w * 64) + b);
      bits &= bits - 1;
    }
  }
  return out;
}

std::size_t RegionSet::hash() const {
  // FNV-1a over the words.
  std::uint64_t h = 1469598103934665603ULL ^ static_cast<std::uint64_t>(universe_);
  for (auto w : words_) {
    h ^= w;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h);
}

}  // namespace objattr
