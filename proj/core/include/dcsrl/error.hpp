#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcsrl
{

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Line and column are 1-based.
class ParseError : public Error
{
public:
    ParseError( const std::string& what, std::size_t line, std::size_t column )
        : Error( "line " + std::to_string( line ) + ", column " + std::to_string( column ) + ": " + what ),
          line_{ line }, column_{ column }
    {
    }

    [[nodiscard]] std::size_t line() const { return line_; }
    [[nodiscard]] std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

/// Well-formed input that violates a model invariant.
class SemanticError : public Error
{
public:
    using Error::Error;
};

/// A value that does not fit the structure it is used with (e.g. a composite
/// state of the wrong arity).
class StructuralError : public Error
{
public:
    using Error::Error;
};

/// An operation called outside its precondition.
class UsageError : public Error
{
public:
    using Error::Error;
};

/// A configured resource cap was exceeded.
class ResourceError : public Error
{
public:
    using Error::Error;
};

/// Training produced non-finite values.
class DivergenceError : public Error
{
public:
    using Error::Error;
};

/// A checkpoint file could not be read back.
class CheckpointError : public Error
{
public:
    using Error::Error;
};

/// A network and a problem disagree on the feature layout.
class SchemaMismatch : public Error
{
public:
    using Error::Error;
};

} // namespace dcsrl
