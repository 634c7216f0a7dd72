// SPDX-License-Identifier: Apache-2.0
#include <string>

namespace clamp {

std::string version() { return "0.1.0"; }

}  // namespace clamp
