#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relcot/prompt.hpp"

namespace relcot::train {

enum class TokenKind { Special, Word, Character };

std::string to_string(TokenKind kind);
TokenKind token_kind_from_string(const std::string& text);

struct VocabEntry {
    std::string text;
    TokenKind kind = TokenKind::Word;

    bool operator==(const VocabEntry&) const = default;
};

/// Whitespace-split word vocabulary with single-character fallback. Words
/// are runs of non-whitespace; a newline is always its own word token so
/// multi-line responses survive encoding. Characters cover every code point
/// seen inside corpus words, so unseen words degrade to character sequences
/// instead of <unk>.
class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kSep = 1;
    static constexpr std::size_t kEos = 2;
    static constexpr std::size_t kUnk = 3;

    /// Specials first, then corpus words sorted, then fallback characters
    /// sorted: the layout is a pure function of the corpus text.
    static Vocab build(const std::vector<std::string>& texts);

    static Vocab from_json(const std::string& text);
    std::string to_json() const;
    static Vocab load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const { return entries_.size(); }
    const std::vector<VocabEntry>& entries() const { return entries_; }
    const VocabEntry& entry(std::size_t id) const;

    std::optional<std::size_t> word_id(const std::string& word) const;
    std::optional<std::size_t> char_id(const std::string& utf8_char) const;

    bool operator==(const Vocab& other) const { return entries_ == other.entries_; }

private:
    void index();

    std::vector<VocabEntry> entries_;
    std::map<std::string, std::size_t> words_;
    std::map<std::string, std::size_t> chars_;
};

/// Splits on spaces and tabs, emits "\n" as its own unit, then maps each
/// unit to a word id, falling back to character ids and finally <unk>.
std::vector<std::size_t> encode_text(const Vocab& vocab, const std::string& text);

/// Inverse of encode_text for vocabulary-covered single-spaced text: a space
/// between adjacent words, none around newlines, character tokens glued to
/// their neighbors.
std::string decode(const Vocab& vocab, const std::vector<std::size_t>& tokens);

/// instruction ⧺ <sep> ⧺ input ⧺ <sep> ⧺ response ⧺ <eos>. The response
/// plus <eos> is the suffix starting at response_begin, which is what the
/// response-only loss mask covers.
struct EncodedRecord {
    std::vector<std::size_t> tokens;
    std::size_t response_begin = 0;

    bool operator==(const EncodedRecord&) const = default;
};

/// Throws when the instruction or response is empty or when the encoded
/// sequence exceeds max_seq_len; nothing is ever truncated.
EncodedRecord encode_record(const Vocab& vocab, const prompt::InstructionRecord& record,
                            std::size_t max_seq_len);

/// Generation-time prefix: instruction ⧺ <sep> ⧺ <sep>, mirroring the
/// training layout with an empty input.
std::vector<std::size_t> encode_prompt(const Vocab& vocab, const std::string& instruction,
                                       std::size_t max_seq_len);

/// Vocabulary over every instruction, input, and response in the dataset.
Vocab build_vocab(const std::vector<prompt::InstructionRecord>& records);

}  // namespace relcot::train
