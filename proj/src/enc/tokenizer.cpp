// SPDX-License-Identifier: Apache-2.0
#include "clamp/enc/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "clamp/core/tensor.hpp"

namespace clamp::enc {

namespace {

const char* kPunct = ".,;:()";

const char* kWords[] = {
    "arm",    "at",     "back",   "ball",   "bin",      "blue",   "bottom", "box",
    "close",  "container", "cube", "drawer", "front",   "goal",   "grasp",  "green",
    "gripper", "handle", "home",  "in",     "into",     "item",   "left",   "lift",
    "move",   "none",   "objects", "of",    "on",       "open",   "pick",   "place",
    "progress", "pull", "push",   "red",    "retreat",  "right",  "robot",  "slide",
    "source", "sphere", "table",  "target", "task",     "the",    "to",     "top",
    "with",   "yellow", "zone",
};

bool is_word_char(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

Vocab::Vocab() {
  tokens_.reserve(kSize);
  tokens_.push_back("<pad>");
  tokens_.push_back("<unk>");
  for (const char* p = kPunct; *p; ++p) tokens_.push_back(std::string(1, *p));
  for (int d = 0; d <= 9; ++d) tokens_.push_back(std::string(1, char('0' + d)));
  for (int n = 0; n <= 100; ++n) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%d.%02d", n / 100, n % 100);
    tokens_.push_back(buf);
  }
  for (const char* w : kWords) tokens_.push_back(w);
  while (static_cast<int>(tokens_.size()) < kSize)
    tokens_.push_back("<reserved-" + std::to_string(tokens_.size()) + ">");
  if (static_cast<int>(tokens_.size()) != kSize)
    core::fail("vocab", "word list overflows the fixed table size");
  order_.resize(tokens_.size());
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  std::sort(order_.begin(), order_.end(),
            [&](int a, int b) { return tokens_[static_cast<size_t>(a)] < tokens_[static_cast<size_t>(b)]; });
}

const Vocab& Vocab::instance() {
  static Vocab v;
  return v;
}

int Vocab::id(const std::string& tok) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), tok, [&](int a, const std::string& t) {
    return tokens_[static_cast<size_t>(a)] < t;
  });
  if (it == order_.end() || tokens_[static_cast<size_t>(*it)] != tok) return -1;
  return *it;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= kSize) core::fail("vocab", "token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> tokenize_raw(const std::string& text) {
  const Vocab& v = Vocab::instance();
  std::string s;
  s.reserve(text.size());
  for (char c : text) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::vector<int> out;
  size_t i = 0, n = s.size();
  while (i < n) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (is_digit(c)) {
      // d.dd numbers are single tokens unless more digits follow (e.g. the
      // "0.123" prefix "0.12" is not taken; the string splits digit-wise)
      if (i + 3 < n && s[i + 1] == '.' && is_digit(s[i + 2]) && is_digit(s[i + 3]) &&
          (i + 4 >= n || !is_digit(s[i + 4]))) {
        int id = v.id(s.substr(i, 4));
        if (id >= 0) {
          out.push_back(id);
          i += 4;
          continue;
        }
      }
      int id = v.id(std::string(1, c));
      out.push_back(id >= 0 ? id : Vocab::kUnk);
      ++i;
      continue;
    }
    if (is_word_char(c)) {
      size_t j = i;
      while (j < n && is_word_char(s[j])) ++j;
      int id = v.id(s.substr(i, j - i));
      out.push_back(id >= 0 ? id : Vocab::kUnk);
      i = j;
      continue;
    }
    int id = v.id(std::string(1, c));
    out.push_back(id >= 0 ? id : Vocab::kUnk);
    ++i;
  }
  return out;
}

std::vector<int> tokenize(const std::string& text, int max_tokens) {
  if (max_tokens <= 0) core::fail("tokenize", "max_tokens must be positive");
  std::vector<int> ids = tokenize_raw(text);
  ids.resize(static_cast<size_t>(max_tokens), Vocab::kPad);
  return ids;
}

std::string detokenize(const std::vector<int>& ids) {
  const Vocab& v = Vocab::instance();
  std::string out;
  for (int id : ids) {
    if (id == Vocab::kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += v.token(id);
  }
  return out;
}

}  // namespace clamp::enc
