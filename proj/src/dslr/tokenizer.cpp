#include "dslr/tokenizer.hpp"

#include "dslr/error.hpp"
#include "dslr/http_client.hpp"
#include "dslr/text.hpp"

namespace dslr {

std::string_view to_string(TokenizerKind k) noexcept {
  return k == TokenizerKind::kRemote ? "remote" : "whitespace";
}

TokenizerKind parse_tokenizer_kind(std::string_view s) {
  if (s == "whitespace") return TokenizerKind::kWhitespace;
  if (s == "remote") return TokenizerKind::kRemote;
  throw Error(ErrorCode::kConfig, "unknown tokenizer kind '" + std::string(s) + "'");
}

std::size_t WhitespaceTokenizer::count(std::string_view text) const {
  return text::count_whitespace_tokens(text);
}

RemoteTokenizer::RemoteTokenizer(TokenizerConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error(ErrorCode::kRemoteUnavailable, "remote tokenizer requires an endpoint");
}

std::size_t RemoteTokenizer::count(std::string_view text) const {
  const auto reply = post_json(config_.endpoint, "/tokenize", {{"text", std::string(text)}},
                               {config_.timeout_ms, 2, 50});
  const auto it = reply.find("count");
  if (it == reply.end() || !it->is_number_integer() || it->get<long long>() < 0)
    throw Error(ErrorCode::kRemoteMalformed, "/tokenize: missing or invalid 'count'");
  return it->get<std::size_t>();
}

std::unique_ptr<Tokenizer> make_tokenizer(const TokenizerConfig& config) {
  if (config.kind == TokenizerKind::kRemote) return std::make_unique<RemoteTokenizer>(config);
  return std::make_unique<WhitespaceTokenizer>();
}

std::size_t count_tokens(std::string_view text, const TokenizerConfig& config) {
  return make_tokenizer(config)->count(text);
}

}  // namespace dslr
