#include "lorafit/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "lorafit/error.hpp"
#include "lorafit/random.hpp"

namespace lorafit {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

bool parse_int(std::string_view s, long long& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && !s.empty();
}

void check_text(std::string_view text, std::size_t line, const char* which) {
  if (trim(text).empty()) {
    throw ValidationError("line " + std::to_string(line) + ": " + which + " is empty");
  }
}

}  // namespace

std::vector<PairExample> parse_tsv(std::istream& in) {
  std::vector<PairExample> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    long long label = 0;
    if (!parse_int(fields[3], label)) {
      if (line_no == 1) continue;  // header
      throw ParseError("line " + std::to_string(line_no) + ": label '" + std::string(fields[3]) +
                       "' is not an integer");
    }
    if (label != 0 && label != 1) {
      throw ValidationError("line " + std::to_string(line_no) + ": label " + std::to_string(label) +
                            " outside {0,1}");
    }
    long long id = 0;
    if (!parse_int(fields[0], id) || id < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": id '" + std::string(fields[0]) +
                       "' is not a non-negative integer");
    }
    check_text(fields[1], line_no, "text_a");
    check_text(fields[2], line_no, "text_b");
    out.push_back(PairExample{static_cast<std::uint64_t>(id), std::string(fields[1]),
                              std::string(fields[2]), static_cast<int>(label)});
  }
  return out;
}

std::vector<PairExample> load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return parse_tsv(in);
}

void write_tsv(std::ostream& out, const std::vector<PairExample>& examples) {
  out << "id\ttext_a\ttext_b\tlabel\n";
  for (const PairExample& e : examples) {
    for (const std::string* t : {&e.text_a, &e.text_b}) {
      if (t->find_first_of("\t\n\r") != std::string::npos) {
        throw ValidationError("example " + std::to_string(e.id) +
                              " has a tab or newline inside its text");
      }
    }
    if (e.label != 0 && e.label != 1) {
      throw ValidationError("example " + std::to_string(e.id) + " has label outside {0,1}");
    }
    out << e.id << '\t' << e.text_a << '\t' << e.text_b << '\t' << e.label << '\n';
  }
}

void write_tsv(const std::filesystem::path& path, const std::vector<PairExample>& examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_tsv(out, examples);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Synthetic paraphrase corpus

namespace {

/// Templates use {x} and {y} slots; '|' separates clauses that may be
/// reordered in a paraphrase.
struct Topic {
  std::vector<std::string> templates;
  std::vector<std::string> x;
  std::vector<std::string> y;
};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> kTopics = {
      {{"how do i cook {x} | without burning the {y}",
        "what is the best way to prepare {x} | for a family dinner with {y}",
        "can i make {x} at home | if i only have {y}",
        "why does my {x} taste bland | when i add {y}"},
       {"pasta", "rice", "chicken", "salmon", "soup", "bread"},
       {"garlic", "butter", "onions", "sauce", "herbs", "cheese"}},
      {{"what are cheap places to visit in {x} | during the {y}",
        "how can i plan a trip to {x} | on a small budget in {y}",
        "is it safe to travel to {x} | alone in the {y}",
        "which city in {x} should i see first | if i arrive in {y}"},
       {"japan", "italy", "peru", "canada", "egypt", "norway"},
       {"summer", "winter", "spring", "autumn", "holidays", "monsoon"}},
      {{"how do i learn {x} programming | as a complete beginner with {y}",
        "what is the fastest way to debug {x} code | that uses {y}",
        "should i use {x} | for a project built around {y}",
        "why is my {x} program slow | when it handles {y}"},
       {"python", "rust", "java", "haskell", "kotlin", "golang"},
       {"threads", "databases", "networking", "graphics", "recursion", "sockets"}},
      {{"how can i build {x} | without going to the {y}",
        "what exercises improve {x} | for people who avoid the {y}",
        "is running good for {x} | if i also train at the {y}",
        "how long does it take to gain {x} | with workouts at the {y}"},
       {"muscle", "stamina", "strength", "flexibility", "endurance", "balance"},
       {"gym", "pool", "track", "park", "studio", "beach"}},
      {{"how should i invest my {x} | to prepare for {y}",
        "is it smart to save {x} | before paying off {y}",
        "what is the safest way to grow {x} | while dealing with {y}",
        "can i borrow against my {x} | to cover {y}"},
       {"savings", "salary", "bonus", "pension", "inheritance", "stocks"},
       {"retirement", "debt", "inflation", "taxes", "tuition", "mortgage"}},
      {{"when should i plant {x} | in soil full of {y}",
        "how do i keep {x} alive | when there are {y}",
        "why are my {x} turning yellow | after adding {y}",
        "what is the easiest way to grow {x} | near {y}"},
       {"tomatoes", "roses", "tulips", "peppers", "strawberries", "orchids"},
       {"clay", "weeds", "slugs", "compost", "fertilizer", "shade"}},
      {{"how can i learn to play the {x} | while reading {y}",
        "what is a good {x} for beginners | who like {y}",
        "is it hard to master the {x} | if i practice {y}",
        "how many hours should i practice the {x} | to perform {y}"},
       {"guitar", "piano", "violin", "drums", "flute", "cello"},
       {"jazz", "scales", "chords", "blues", "classics", "songs"}},
      {{"what causes {x} | after eating {y}",
        "how do i treat {x} | without taking {y}",
        "should i see a doctor about {x} | that started with {y}",
        "can {x} be a sign of something serious | when combined with {y}"},
       {"headaches", "insomnia", "nausea", "fatigue", "dizziness", "allergies"},
       {"sugar", "medicine", "dairy", "caffeine", "gluten", "antibiotics"}},
      {{"how do i fix the {x} of my car | when it makes {y}",
        "why does my car {x} fail | after driving through {y}",
        "is it expensive to replace a car {x} | damaged by {y}",
        "how often should i check the {x} | in a car exposed to {y}"},
       {"brakes", "battery", "engine", "clutch", "radiator", "tires"},
       {"noise", "snow", "mud", "heat", "rust", "smoke"}},
      {{"how do i prepare for the {x} exam | while studying {y}",
        "what is the best way to study {x} | for someone weak in {y}",
        "can i pass the {x} test | without knowing {y}",
        "which books help with {x} | for students of {y}"},
       {"chemistry", "history", "calculus", "biology", "physics", "economics"},
       {"grammar", "statistics", "geometry", "algebra", "writing", "vocabulary"}},
  };
  return kTopics;
}

const std::map<std::string, std::vector<std::string>>& synonyms() {
  static const std::map<std::string, std::vector<std::string>> kSynonyms = {
      {"how", {"in what way"}},
      {"best", {"top", "ideal"}},
      {"way", {"method", "approach"}},
      {"cheap", {"affordable", "inexpensive"}},
      {"learn", {"study", "pick up"}},
      {"fastest", {"quickest"}},
      {"safe", {"secure"}},
      {"safest", {"most secure"}},
      {"good", {"great", "fine"}},
      {"smart", {"wise", "sensible"}},
      {"easiest", {"simplest"}},
      {"hard", {"difficult", "tough"}},
      {"fix", {"repair"}},
      {"replace", {"swap"}},
      {"expensive", {"costly", "pricey"}},
      {"build", {"develop"}},
      {"improve", {"boost", "enhance"}},
      {"grow", {"increase"}},
      {"slow", {"sluggish"}},
      {"visit", {"see", "explore"}},
      {"plan", {"organize", "arrange"}},
      {"trip", {"journey", "vacation"}},
      {"make", {"prepare"}},
      {"cook", {"prepare", "make"}},
      {"should", {"ought to"}},
      {"small", {"tight", "limited"}},
      {"treat", {"cure", "handle"}},
      {"help", {"assist"}},
      {"first", {"initially"}},
      {"beginner", {"novice", "newcomer"}},
      {"beginners", {"novices", "newcomers"}},
      {"often", {"frequently", "regularly"}},
      {"check", {"inspect", "examine"}},
      {"prepare", {"get ready"}},
      {"home", {"my house"}},
      {"doctor", {"physician"}},
      {"car", {"vehicle", "automobile"}},
      {"books", {"textbooks", "guides"}},
      {"exam", {"test"}},
      {"test", {"exam"}},
      {"keep", {"maintain"}},
      {"use", {"choose", "pick"}},
      {"program", {"application"}},
      {"code", {"software"}},
      {"practice", {"rehearse", "train"}},
  };
  return kSynonyms;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> fill_clauses(const std::string& tmpl, const std::string& x,
                                      const std::string& y) {
  std::vector<std::string> clauses;
  std::size_t start = 0;
  while (true) {
    const auto bar = tmpl.find('|', start);
    std::string clause(trim(std::string_view(tmpl).substr(
        start, bar == std::string::npos ? std::string::npos : bar - start)));
    for (auto [slot, value] : {std::pair{"{x}", &x}, std::pair{"{y}", &y}}) {
      for (auto pos = clause.find(slot); pos != std::string::npos; pos = clause.find(slot)) {
        clause.replace(pos, 3, *value);
      }
    }
    clauses.push_back(std::move(clause));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return clauses;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string question(const std::vector<std::string>& clauses) {
  std::vector<std::string> words;
  for (const auto& c : clauses) {
    for (auto& w : split_words(c)) words.push_back(std::move(w));
  }
  return join(words) + "?";
}

std::string paraphrase(std::vector<std::string> clauses, Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  if (clauses.size() > 1 && coin(rng)) std::rotate(clauses.begin(), clauses.begin() + 1, clauses.end());
  std::vector<std::string> words;
  for (const auto& c : clauses) {
    for (auto& w : split_words(c)) {
      auto it = synonyms().find(w);
      if (it != synonyms().end() && coin(rng)) {
        for (auto& s : split_words(pick(it->second, rng))) words.push_back(std::move(s));
      } else {
        words.push_back(std::move(w));
      }
    }
  }
  return join(words) + "?";
}

std::string random_question(const Topic& topic, Rng& rng) {
  return question(fill_clauses(pick(topic.templates, rng), pick(topic.x, rng), pick(topic.y, rng)));
}

}  // namespace

std::size_t synthetic_topic_count() { return topics().size(); }

std::size_t synthetic_min_templates_per_topic() {
  std::size_t m = SIZE_MAX;
  for (const Topic& t : topics()) m = std::min(m, t.templates.size());
  return m;
}

std::vector<PairExample> generate_synthetic(std::uint64_t seed, std::size_t n) {
  if (n < 2 || n % 2 != 0) {
    throw ValidationError("synthetic corpus size must be even and at least 2, got " +
                          std::to_string(n));
  }
  Rng rng(derive_seed(seed, "data"));
  const auto& all = topics();
  std::uniform_int_distribution<std::size_t> topic_dist(0, all.size() - 1);

  std::vector<PairExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n / 2; ++i) {
    const Topic& t = all[topic_dist(rng)];
    const auto clauses = fill_clauses(pick(t.templates, rng), pick(t.x, rng), pick(t.y, rng));
    PairExample pos;
    pos.text_a = question(clauses);
    pos.text_b = paraphrase(clauses, rng);
    pos.label = 1;
    out.push_back(std::move(pos));

    const std::size_t ta = topic_dist(rng);
    std::size_t tb = topic_dist(rng);
    while (tb == ta) tb = topic_dist(rng);
    PairExample neg;
    neg.text_a = random_question(all[ta], rng);
    neg.text_b = random_question(all[tb], rng);
    neg.label = 0;
    out.push_back(std::move(neg));
  }
  std::shuffle(out.begin(), out.end(), rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].id = i;
  return out;
}

// ---------------------------------------------------------------------------

Tokenizer::Tokenizer(std::size_t vocab_size, std::size_t max_seq_len)
    : vocab_size_(vocab_size), max_seq_len_(max_seq_len) {
  if (vocab_size == 0 || max_seq_len == 0) {
    throw ValidationError("tokenizer needs positive vocab_size and max_seq_len");
  }
}

std::vector<std::string> Tokenizer::split(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = c >= 0x80 || std::isalnum(c);
    if (word) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  const auto tokens = split(text);
  if (tokens.empty()) throw ValidationError("cannot tokenize empty text");
  std::vector<int> ids;
  const std::size_t n = std::min(tokens.size(), max_seq_len_);
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(static_cast<int>(stable_hash(tokens[i]) % vocab_size_));
  }
  return ids;
}

}  // namespace lorafit
