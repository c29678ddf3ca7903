#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

namespace objattr {

/// Fixed-universe bitset over region ids [0, universe). Doubles as the memo
/// key for objective and detection caches.
class RegionSet {
 public:
  RegionSet() = default;
  explicit RegionSet(int universe);
  RegionSet(int universe, std::initializer_list<int> ids);

  static RegionSet full(int universe);
  template <typename Range>
  static RegionSet of(int universe, const Range& ids) {
    RegionSet s(universe);
    for (int id : ids) s.insert(id);
    return s;
  }

  int universe() const { return universe_; }
  bool contains(int id) const;
  void insert(int id);
  void erase(int id);
  int count() const;
  bool empty() const { return count() == 0; }

  RegionSet complement() const;
  RegionSet with(int id) const;
  bool is_subset_of(const RegionSet& other) const;

  /// Member ids in ascending order.
  std::vector<int> members() const;

  std::size_t hash() const;

  friend bool operator==(const RegionSet&, const RegionSet&) = default;

 private:
  void check(int id) const;

  int universe_ = 0;
  std::vector<std::uint64_t> words_;
};

struct RegionSetHash {
  std::size_t operator()(const RegionSet& s) const { return s.hash(); }
};

}  // namespace objattr
