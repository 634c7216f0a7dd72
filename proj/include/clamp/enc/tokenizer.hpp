// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace clamp::enc {

// Fixed 512-entry vocabulary baked into the library: specials, punctuation,
// digits, the two-decimal numbers 0.00..1.00 emitted by the text generator,
// and the closed word list those templates draw from. Unused slots are
// reserved fillers so the table size stays stable across word-list edits.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSize = 512;

  static const Vocab& instance();

  // -1 when the token is not in the vocabulary
  int id(const std::string& tok) const;
  const std::string& token(int id) const;
  int size() const { return kSize; }

 private:
  Vocab();
  std::vector<std::string> tokens_;
  // flat lookup; the vocab is tiny so a sorted vector + binary search is fine
  std::vector<int> order_;  // indices into tokens_, sorted by string
};

// Deterministic word/number tokenizer (no byte pairs). Lowercases, splits on
// whitespace, peels punctuation, and recognizes d.dd two-decimal numbers as
// single tokens when they are in the vocabulary and not followed by another
// digit. Unknown words map to kUnk.
std::vector<int> tokenize_raw(const std::string& text);

// tokenize_raw then truncate/pad with kPad to exactly max_tokens ids
std::vector<int> tokenize(const std::string& text, int max_tokens);

// token ids back to a readable string (for tests/debugging)
std::string detokenize(const std::vector<int>& ids);

}  // namespace clamp::enc
