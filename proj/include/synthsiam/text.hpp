#pragma once

// Text normalization and light segmentation shared by the corpus, prompt,
// and encoder layers.

#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "synthsiam/errors.hpp"

namespace synthsiam {

// Canonical text form used for storage and fingerprinting: Unicode NFC,
// trimmed, with internal whitespace runs collapsed to a single space.
// Invalid UTF-8 bytes are replaced with U+FFFD.
inline std::string normalize_text(std::string_view raw) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status) || nfc == nullptr) {
        throw Error("ICU NFC normalizer unavailable");
    }
    const icu::UnicodeString input =
        icu::UnicodeString::fromUTF8(icu::StringPiece(raw.data(), static_cast<int>(raw.size())));
    icu::UnicodeString composed = nfc->normalize(input, status);
    if (U_FAILURE(status)) {
        throw Error("Unicode normalization failed");
    }

    icu::UnicodeString collapsed;
    bool pending_space = false;
    bool seen_char = false;
    for (int32_t i = 0; i < composed.length();) {
        const UChar32 c = composed.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c) || c == u' ') {
            pending_space = seen_char;
            continue;
        }
        if (pending_space) {
            collapsed.append(u' ');
            pending_space = false;
        }
        collapsed.append(c);
        seen_char = true;
    }

    std::string out;
    collapsed.toUTF8String(out);
    return out;
}

// Lowercased alphanumeric word tokens. Bytes >= 0x80 (multibyte UTF-8) are
// kept as word characters so non-ASCII text still produces stable tokens.
inline std::vector<std::string> tokenize_words(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        const bool word_char = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                               (c >= '0' && c <= '9') || c >= 0x80;
        if (word_char) {
            current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                                     : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// Sentence boundary rule: ". ", "? " or "! " followed by an uppercase letter.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    std::size_t start = 0;
    for (std::size_t i = 0; i + 2 < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '?' || c == '!') && text[i + 1] == ' ' &&
            text[i + 2] >= 'A' && text[i + 2] <= 'Z') {
            sentences.emplace_back(text.substr(start, i + 1 - start));
            start = i + 2;
        }
    }
    if (start < text.size()) {
        sentences.emplace_back(text.substr(start));
    }
    return sentences;
}

inline std::string first_sentences(std::string_view text, std::size_t count) {
    const auto sentences = split_sentences(text);
    std::string out;
    for (std::size_t i = 0; i < sentences.size() && i < count; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += sentences[i];
    }
    return out;
}

} // namespace synthsiam
