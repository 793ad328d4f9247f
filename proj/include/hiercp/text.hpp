#ifndef HIERCP_TEXT_HPP
#define HIERCP_TEXT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hiercp {

// Shortest decimal representation that parses back to the same double.
// Infinities print as "inf"/"-inf", NaN as "nan".
std::string format_double(double value);

// Strict full-string parses; both throw ValidationError on malformed input.
// parse_double accepts "inf", "-inf" and "nan" (case-insensitive).
double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);

std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

// Splits into lines, dropping a trailing '\r' on each (CRLF input).
std::vector<std::string> split_lines(std::string_view text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

// key=value lines; '#' starts a comment, blank lines are skipped.
// Duplicate keys are an error.
std::map<std::string, std::string> parse_key_value(std::string_view text);

} // namespace hiercp

#endif
