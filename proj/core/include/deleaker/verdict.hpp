#pragma once

#include <string>

namespace deleaker {

// Five-way comparative outcome. Ordinal indices run 1..5 from
// MajorDegrade to MajorImprove with NoChange at 3.
enum class VerdictLabel { MajorImprove, MinorImprove, NoChange, MinorDegrade, MajorDegrade };

int verdict_ordinal(VerdictLabel label);              // 1..5
VerdictLabel verdict_from_ordinal(int ordinal);       // throws outside 1..5
std::string to_string(VerdictLabel label);
VerdictLabel verdict_from_string(const std::string&); // throws on unknown

} // namespace deleaker
