#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dslr {

/// A prompt template with {name} placeholders. Substitution is single-pass:
/// values are copied verbatim and never re-scanned for placeholders.
class PromptTemplate {
 public:
  /// Throws InvalidArgument unless every required placeholder occurs exactly once.
  PromptTemplate(std::string name, std::string body, std::vector<std::string> placeholders);

  /// Loads a template file and checks its SHA-256 when `expected_sha256` is non-empty.
  static PromptTemplate from_file(std::string name, const std::filesystem::path& path,
                                  std::vector<std::string> placeholders, std::string_view expected_sha256 = {});

  const std::string& name() const noexcept { return name_; }
  const std::string& body() const noexcept { return body_; }
  std::string sha256() const;

  std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

 private:
  std::string name_;
  std::string body_;
  std::vector<std::string> placeholders_;
};

/// Built-in QA template ({context_str}, {query_str}).
const PromptTemplate& qa_template();
/// Built-in relevance-generation template ({title_str}, {document_str}, {query_str}).
const PromptTemplate& rg_template();

inline constexpr std::string_view kQaTemplateSha256 =
    "7f55842dea28fd83ef6de8cdd3106efb2728e8dbd9d324ce42da73b5e484f659";
inline constexpr std::string_view kRgTemplateSha256 =
    "6199451c852660472d1a91a2409febbd74480ef3086995a8d8fa3a843b6c3a81";

std::string render_qa_prompt(std::string_view context, std::string_view query);
std::string render_rg_prompt(std::string_view title, std::string_view document, std::string_view query);

struct ReaderConfig {
  enum class Kind { kRemote, kMock };
  Kind kind = Kind::kMock;
  std::string endpoint;
  std::string table_path;
  int max_tokens = 100;
  double temperature = 0.0;  // greedy decoding only
  int timeout_ms = 60000;

  void validate() const;
};

struct Answer {
  std::string query_id;
  std::string text;
  double latency_ms = 0.0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

class Reader {
 public:
  virtual ~Reader() = default;
  virtual Answer generate(std::string_view prompt) const = 0;
};

/// Deterministic reader for fixtures.
///
/// Resolution order: exact prompt SHA-256 entry, then the first rule whose
/// `contains` substring occurs in the prompt, then `default_answer`.
class MockReader final : public Reader {
 public:
  struct Table {
    std::map<std::string, std::string> by_prompt_sha256;
    std::vector<std::pair<std::string, std::string>> contains_rules;
    std::string default_answer;
  };

  explicit MockReader(Table table) : table_(std::move(table)) {}

  /// {"by_prompt_sha256": {hash: text}, "rules": [{"contains","answer"}], "default": text}
  static MockReader from_file(const std::filesystem::path& path);
  static MockReader from_json_text(std::string_view json);

  Answer generate(std::string_view prompt) const override;

 private:
  Table table_;
};

/// Client for POST /generate {"prompt","max_tokens","temperature"}.
class RemoteReader final : public Reader {
 public:
  explicit RemoteReader(ReaderConfig config);
  Answer generate(std::string_view prompt) const override;

 private:
  ReaderConfig config_;
};

std::unique_ptr<Reader> make_reader(const ReaderConfig& config);

}  // namespace dslr
