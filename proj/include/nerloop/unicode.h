#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nerloop {

// A decoded code point and where it came from in the UTF-8 source. Invalid
// bytes decode one at a time to U+FFFD so every byte belongs to exactly one
// character and offsets stay consistent with the source.
struct Utf8Char {
  char32_t cp;
  std::size_t byte_offset;
  std::size_t byte_length;
};

std::vector<Utf8Char> decode_utf8(std::string_view text);

// Byte offset of every character plus a trailing entry for text.size().
std::vector<std::size_t> char_offsets(std::string_view text);

std::size_t char_length(std::string_view text);

void append_utf8(std::string& out, char32_t cp);

// Substring by character (code point) indices [begin, end).
std::string char_substr(std::string_view text, std::size_t begin,
                        std::size_t end);

bool is_space(char32_t cp);
bool is_word_char(char32_t cp);
bool is_punct_char(char32_t cp);
bool is_upper(char32_t cp);
bool is_lower(char32_t cp);
bool is_digit(char32_t cp);

// Simple case folding: ASCII, Latin-1 and basic Greek/Cyrillic capitals.
char32_t fold_case(char32_t cp);
std::string casefold(std::string_view text);

}  // namespace nerloop
