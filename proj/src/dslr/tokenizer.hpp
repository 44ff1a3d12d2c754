#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>

namespace dslr {

enum class TokenizerKind { kWhitespace, kRemote };

struct TokenizerConfig {
  TokenizerKind kind = TokenizerKind::kWhitespace;
  std::string endpoint;
  int timeout_ms = 10000;
};

std::string_view to_string(TokenizerKind k) noexcept;
TokenizerKind parse_tokenizer_kind(std::string_view s);

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::size_t count(std::string_view text) const = 0;
};

class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::size_t count(std::string_view text) const override;
};

/// POST /tokenize {"text"} -> {"count"} for subword-tokenizer parity.
class RemoteTokenizer final : public Tokenizer {
 public:
  explicit RemoteTokenizer(TokenizerConfig config);
  std::size_t count(std::string_view text) const override;

 private:
  TokenizerConfig config_;
};

std::unique_ptr<Tokenizer> make_tokenizer(const TokenizerConfig& config);

/// Token count of `text` under `config` (convenience for one-off calls).
std::size_t count_tokens(std::string_view text, const TokenizerConfig& config = {});

}  // namespace dslr
