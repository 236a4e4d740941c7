#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lorafit {

/// One labeled sentence pair; label 1 marks a duplicate.
struct PairExample {
  std::uint64_t id = 0;
  std::string text_a;
  std::string text_b;
  int label = 0;

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

/// Reads "id<TAB>text_a<TAB>text_b<TAB>label" rows. A first row whose label
/// field is not numeric is taken as a header. Blank lines are skipped.
/// Throws ParseError (with the line number) for malformed rows and
/// ValidationError for labels outside {0,1} or blank texts.
std::vector<PairExample> parse_tsv(std::istream& in);
std::vector<PairExample> load_tsv(const std::filesystem::path& path);

/// Emits a header row followed by one row per example, '\n'-terminated.
void write_tsv(std::ostream& out, const std::vector<PairExample>& examples);
void write_tsv(const std::filesystem::path& path, const std::vector<PairExample>& examples);

/// `n` shuffled pairs, half duplicates and half non-duplicates. A duplicate
/// pairs a templated question with a paraphrase of it (synonym swaps and
/// clause reordering); a non-duplicate pairs questions from two different
/// topics. Throws ValidationError unless n is even and at least 2.
std::vector<PairExample> generate_synthetic(std::uint64_t seed, std::size_t n);

/// Number of topic families and the number of surface templates in the
/// smallest family.
std::size_t synthetic_topic_count();
std::size_t synthetic_min_templates_per_topic();

/// Hashing tokenizer: lowercases ASCII, splits on whitespace and ASCII
/// punctuation, maps each token to stable_hash(token) mod vocab_size and keeps
/// at most max_seq_len tokens.
class Tokenizer {
 public:
  Tokenizer(std::size_t vocab_size, std::size_t max_seq_len);

  /// Throws ValidationError when the text holds no tokens.
  std::vector<int> encode(std::string_view text) const;
  std::vector<std::string> split(std::string_view text) const;

  std::size_t vocab_size() const noexcept { return vocab_size_; }
  std::size_t max_seq_len() const noexcept { return max_seq_len_; }

 private:
  std::size_t vocab_size_;
  std::size_t max_seq_len_;
};

}  // namespace lorafit
