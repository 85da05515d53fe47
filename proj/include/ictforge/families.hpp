#pragma once

// Registry of the built-in task families and the partition-by-type helpers
// used to keep optimization families separate from held-out ones.

#include <memory>
#include <string>
#include <vector>

#include "ictforge/envkit.hpp"
#include "ictforge/housetext.hpp"
#include "ictforge/verbgrid.hpp"

namespace ictforge::envkit {

inline const std::vector<FamilyPtr>& builtin_families() {
  static const std::vector<FamilyPtr> families = [] {
    std::vector<FamilyPtr> all = verbgrid::make_verbgrid_families();
    for (FamilyPtr& f : housetext::make_housetext_families()) all.push_back(std::move(f));
    return all;
  }();
  return families;
}

inline FamilyPtr find_family(const std::string& family_id) {
  for (const FamilyPtr& f : builtin_families())
    if (f->family_id() == family_id) return f;
  throw ConfigError("unknown task family: " + family_id);
}

/// Families from `ids` on the requested side of the partition. Passing an
/// empty list means "every built-in family".
inline std::vector<FamilyPtr> families_for(const std::vector<std::string>& ids,
                                           MetaSplit side) {
  std::vector<FamilyPtr> out;
  if (ids.empty()) {
    for (const FamilyPtr& f : builtin_families())
      if (f->meta_split() == side) out.push_back(f);
    return out;
  }
  for (const std::string& id : ids) {
    FamilyPtr f = find_family(id);
    if (f->meta_split() == side) out.push_back(f);
  }
  return out;
}

}  // namespace ictforge::envkit
