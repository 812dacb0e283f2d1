#pragma once

#include <stdexcept>
#include <string>

namespace nebula {

// Base for errors caused by user input or on-disk data. The CLI maps these
// to exit code 1; anything else escaping to main is exit code 2.
class UserError : public std::runtime_error {
public:
    explicit UserError(const std::string& msg) : std::runtime_error(msg) {}
};

class MalformedJson : public UserError {
public:
    MalformedJson(const std::string& msg, std::size_t byte_position)
        : UserError(msg), position(byte_position) {}
    std::size_t position;
};

class MissingFile : public UserError {
public:
    explicit MissingFile(const std::string& path)
        : UserError("missing file: " + path), path(path) {}
    std::string path;
};

class BadLabel : public UserError {
public:
    BadLabel(const std::string& msg, std::size_t line_number)
        : UserError(msg), line(line_number) {}
    std::size_t line;
};

class EmptyCorpus : public UserError {
public:
    EmptyCorpus() : UserError("corpus is empty") {}
};

class EmptyDataset : public UserError {
public:
    EmptyDataset() : UserError("dataset is empty") {}
};

class TooFewSamples : public UserError {
public:
    explicit TooFewSamples(const std::string& msg) : UserError(msg) {}
};

class SingleClass : public UserError {
public:
    SingleClass() : UserError("both classes must be present") {}
};

// Internal invariant violations: wrong shapes, ids out of range, bad spans.
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

class ShapeMismatch : public InternalError {
public:
    explicit ShapeMismatch(const std::string& msg) : InternalError(msg) {}
};

class IdOutOfRange : public InternalError {
public:
    explicit IdOutOfRange(const std::string& msg) : InternalError(msg) {}
};

class SpanNotDivisor : public InternalError {
public:
    explicit SpanNotDivisor(const std::string& msg) : InternalError(msg) {}
};

class LabelOutOfRange : public InternalError {
public:
    explicit LabelOutOfRange(const std::string& msg) : InternalError(msg) {}
};

class LengthMismatch : public InternalError {
public:
    explicit LengthMismatch(const std::string& msg) : InternalError(msg) {}
};

}  // namespace nebula
