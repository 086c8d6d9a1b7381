#include "deleaker/verdict.hpp"

#include <stdexcept>

namespace deleaker {

int verdict_ordinal(VerdictLabel label) {
    switch (label) {
    case VerdictLabel::MajorDegrade: return 1;
    case VerdictLabel::MinorDegrade: return 2;
    case VerdictLabel::NoChange: return 3;
    case VerdictLabel::MinorImprove: return 4;
    case VerdictLabel::MajorImprove: return 5;
    }
    throw std::logic_error("unknown verdict label");
}

VerdictLabel verdict_from_ordinal(int ordinal) {
    switch (ordinal) {
    case 1: return VerdictLabel::MajorDegrade;
    case 2: return VerdictLabel::MinorDegrade;
    case 3: return VerdictLabel::NoChange;
    case 4: return VerdictLabel::MinorImprove;
    case 5: return VerdictLabel::MajorImprove;
    }
    throw std::invalid_argument("verdict ordinal outside 1..5");
}

std::string to_string(VerdictLabel label) {
    switch (label) {
    case VerdictLabel::MajorImprove: return "major_improvement";
    case VerdictLabel::MinorImprove: return "minor_improvement";
    case VerdictLabel::NoChange: return "no_change";
    case VerdictLabel::MinorDegrade: return "minor_degradation";
    case VerdictLabel::MajorDegrade: return "major_degradation";
    }
    throw std::logic_error("unknown verdict label");
}

VerdictLabel verdict_from_string(const std::string& s) {
    if (s == "major_improvement") return VerdictLabel::MajorImprove;
    if (s == "minor_improvement") return VerdictLabel::MinorImprove;
    if (s == "no_change") return VerdictLabel::NoChange;
    if (s == "minor_degradation") return VerdictLabel::MinorDegrade;
    if (s == "major_degradation") return VerdictLabel::MajorDegrade;
    throw std::invalid_argument("unknown verdict label: " + s);
}

} // namespace deleaker
