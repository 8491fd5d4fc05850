// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace capy
{

/// Base of every error raised by the engine. `code()` is the stable machine
/// name surfaced over the wire as `{code, message}`.
class Error: public std::runtime_error
{
public:
    Error(std::string code, const std::string& message): std::runtime_error(message), _code(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return _code; }

private:
    std::string _code;
};

#define CAPY_DEFINE_ERROR(Name, Base, Code)                              \
    class Name: public Base                                              \
    {                                                                    \
    public:                                                              \
        explicit Name(const std::string& message): Base(Code, message) {} \
                                                                         \
    protected:                                                           \
        Name(std::string code, const std::string& message): Base(std::move(code), message) {} \
    }

// notebook-model
CAPY_DEFINE_ERROR(MalformedFile, Error, "malformed_file");
CAPY_DEFINE_ERROR(UnsupportedVersion, Error, "unsupported_version");

// llm-gateway
CAPY_DEFINE_ERROR(TransportError, Error, "transport_error");
CAPY_DEFINE_ERROR(StubExhausted, TransportError, "stub_exhausted");
CAPY_DEFINE_ERROR(ProviderError, Error, "provider_error");
CAPY_DEFINE_ERROR(StubExpectationFailed, ProviderError, "stub_expectation_failed");
CAPY_DEFINE_ERROR(EnvelopeParseError, Error, "envelope_parse_error");

// executor
CAPY_DEFINE_ERROR(WorkerDead, Error, "worker_dead");
CAPY_DEFINE_ERROR(SpawnError, Error, "spawn_error");

// critique-engine
CAPY_DEFINE_ERROR(InvalidConfig, Error, "invalid_config");

// insight-graph
CAPY_DEFINE_ERROR(ExtractionError, Error, "extraction_error");

// clarifier
CAPY_DEFINE_ERROR(UnknownCell, Error, "unknown_cell");

// story-engine
CAPY_DEFINE_ERROR(StoryParseError, Error, "story_parse_error");
CAPY_DEFINE_ERROR(InvalidAnchor, Error, "invalid_anchor");
CAPY_DEFINE_ERROR(MissingFigure, Error, "missing_figure");
CAPY_DEFINE_ERROR(UnknownBlock, Error, "unknown_block");

// settings / service validation
CAPY_DEFINE_ERROR(ValidationError, Error, "validation_error");

#undef CAPY_DEFINE_ERROR

} // namespace capy
