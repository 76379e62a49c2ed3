#include "types.hpp"

#include "errors.hpp"

#include <charconv>
#include <system_error>

namespace fastslow {

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) raise(ErrorCategory::Internal, "types", "format_double", "to_chars failed");
    return std::string(buf, ptr);
}

double parse_double(const std::string& text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        // from_chars does not accept "inf"/"nan" spellings produced by some writers
        if (text == "inf") return INFINITY;
        if (text == "-inf") return -INFINITY;
        if (text == "nan") return NAN;
        raise(ErrorCategory::Io, "types", "parse_double", "not a number: '" + text + "'");
    }
    return value;
}

}  // namespace fastslow
