#include "splitwing/tensor.hpp"

#include <sstream>

namespace splitwing {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw ValidationError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

}  // namespace splitwing
