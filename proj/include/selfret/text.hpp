/*
 * Copyright 2026 The selfret Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace selfret {

/// Lowercased token strings; never contains an empty token.
using TokenSequence = std::vector<std::string>;

/// Splits text into tokens: lowercase, break on Unicode whitespace, and emit
/// every punctuation code point as a token of its own. Input is UTF-8;
/// invalid bytes are carried through unchanged as part of the current word.
///
/// Lowercasing covers ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic;
/// other scripts pass through as-is.
TokenSequence tokenize(std::string_view text);

/// Single-space join, the inverse used for the tokenize fixpoint.
std::string join_tokens(const TokenSequence& tokens);

/// True when the text holds at least one non-whitespace code point.
bool has_visible_text(std::string_view text);

}  // namespace selfret
