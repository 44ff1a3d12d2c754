#include "dslr/reader.hpp"

#include <chrono>

#include <json.hpp>

#include "dslr/digest.hpp"
#include "dslr/embedded_resources.hpp"
#include "dslr/error.hpp"
#include "dslr/http_client.hpp"
#include "dslr/text.hpp"

namespace dslr {

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body, std::vector<std::string> placeholders)
    : name_(std::move(name)), body_(std::move(body)), placeholders_(std::move(placeholders)) {
  for (const auto& p : placeholders_) {
    const auto n = count_occurrences(body_, "{" + p + "}");
    if (n != 1)
      throw Error(ErrorCode::kInvalidArgument, "template '" + name_ + "': placeholder {" + p + "} occurs " +
                                                   std::to_string(n) + " times (expected 1)");
  }
}

PromptTemplate PromptTemplate::from_file(std::string name, const std::filesystem::path& path,
                                         std::vector<std::string> placeholders, std::string_view expected_sha256) {
  auto body = read_file(path);
  if (!expected_sha256.empty() && sha256_hex(body) != expected_sha256)
    throw Error(ErrorCode::kInvalidArgument, "template " + path.string() + " does not match its checksum");
  return PromptTemplate(std::move(name), std::move(body), std::move(placeholders));
}

std::string PromptTemplate::sha256() const { return sha256_hex(body_); }

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
  std::string out;
  out.reserve(body_.size() + 256);
  std::size_t i = 0;
  while (i < body_.size()) {
    bool substituted = false;
    if (body_[i] == '{') {
      const auto close = body_.find('}', i + 1);
      if (close != std::string::npos) {
        const std::string_view key(body_.data() + i + 1, close - i - 1);
        if (auto it = values.find(key); it != values.end()) {
          out += it->second;
          i = close + 1;
          substituted = true;
        }
      }
    }
    if (!substituted) out.push_back(body_[i++]);
  }
  return out;
}

const PromptTemplate& qa_template() {
  static const PromptTemplate t("qa", std::string(resources::kQaTemplate), {"context_str", "query_str"});
  return t;
}

const PromptTemplate& rg_template() {
  static const PromptTemplate t("rg", std::string(resources::kRgTemplate),
                                {"title_str", "document_str", "query_str"});
  return t;
}

std::string render_qa_prompt(std::string_view context, std::string_view query) {
  return qa_template().render({{"context_str", std::string(context)}, {"query_str", std::string(query)}});
}

std::string render_rg_prompt(std::string_view title, std::string_view document, std::string_view query) {
  return rg_template().render({{"title_str", std::string(title)},
                               {"document_str", std::string(document)},
                               {"query_str", std::string(query)}});
}

void ReaderConfig::validate() const {
  if (kind == Kind::kRemote && endpoint.empty()) throw Error(ErrorCode::kRemoteUnavailable, "remote reader requires an endpoint");
  if (kind == Kind::kMock && table_path.empty()) throw Error(ErrorCode::kConfig, "mock reader requires a table");
  if (temperature != 0.0) throw Error(ErrorCode::kConfig, "reader temperature must be 0 (greedy decoding)");
  if (max_tokens < 1) throw Error(ErrorCode::kConfig, "max_tokens must be >= 1");
  if (timeout_ms <= 0) throw Error(ErrorCode::kConfig, "reader timeout_ms must be > 0");
}

MockReader MockReader::from_json_text(std::string_view json) {
  try {
    auto j = nlohmann::json::parse(json);
    Table t;
    const auto by_hash = j.value("by_prompt_sha256", nlohmann::json::object());
    for (const auto& [hash, answer] : by_hash.items()) t.by_prompt_sha256[hash] = answer.get<std::string>();
    const auto rules = j.value("rules", nlohmann::json::array());
    for (const auto& r : rules)
      t.contains_rules.emplace_back(r.at("contains").get<std::string>(), r.at("answer").get<std::string>());
    t.default_answer = j.value("default", std::string{});
    return MockReader(std::move(t));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("mock reader table: ") + e.what());
  }
}

MockReader MockReader::from_file(const std::filesystem::path& path) { return from_json_text(read_file(path)); }

Answer MockReader::generate(std::string_view prompt) const {
  const auto started = std::chrono::steady_clock::now();
  Answer a;
  if (auto it = table_.by_prompt_sha256.find(sha256_hex(prompt)); it != table_.by_prompt_sha256.end()) {
    a.text = it->second;
  } else {
    a.text = table_.default_answer;
    for (const auto& [needle, answer] : table_.contains_rules) {
      if (prompt.find(needle) != std::string_view::npos) {
        a.text = answer;
        break;
      }
    }
  }
  a.prompt_tokens = text::count_whitespace_tokens(prompt);
  a.completion_tokens = text::count_whitespace_tokens(a.text);
  a.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return a;
}

RemoteReader::RemoteReader(ReaderConfig config) : config_(std::move(config)) {
  config_.validate();
}

Answer RemoteReader::generate(std::string_view prompt) const {
  nlohmann::json body{{"prompt", std::string(prompt)},
                      {"max_tokens", config_.max_tokens},
                      {"temperature", config_.temperature}};
  const auto started = std::chrono::steady_clock::now();
  const auto reply = post_json(config_.endpoint, "/generate", body, {config_.timeout_ms, 2, 50});
  Answer a;
  a.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  try {
    a.text = reply.at("text").get<std::string>();
    a.prompt_tokens = reply.value("prompt_tokens", std::size_t{0});
    a.completion_tokens = reply.value("completion_tokens", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kRemoteMalformed, std::string("/generate: ") + e.what());
  }
  return a;
}

std::unique_ptr<Reader> make_reader(const ReaderConfig& config) {
  config.validate();
  if (config.kind == ReaderConfig::Kind::kRemote) return std::make_unique<RemoteReader>(config);
  return std::make_unique<MockReader>(MockReader::from_file(config.table_path));
}

}  // namespace dslr
