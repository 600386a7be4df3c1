#pragma once

#include "robmix/types.hpp"

#include <iosfwd>
#include <string>

namespace robmix {

// CSV layout: header `group,y,x1..xp,z1..zq`, rows sorted by group id, all
// groups of equal size m. Readers reject ragged groups.
void write_dataset_csv(std::ostream& os, const GroupedDataset& data);
void write_dataset_csv(const std::string& path, const GroupedDataset& data);

GroupedDataset read_dataset_csv(std::istream& is);
GroupedDataset read_dataset_csv(const std::string& path);

}  // namespace robmix
