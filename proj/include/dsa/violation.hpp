#pragma once

#include <string>

namespace dsa {

// A named rule failure. Validators return lists of these instead of throwing
// so callers can report every problem at once.
struct Violation {
    std::string field;
    std::string rule;
};

}  // namespace dsa
