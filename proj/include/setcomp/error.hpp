#pragma once

#include <stdexcept>
#include <string>

namespace setcomp {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DuplicateDocId : public Error {
public:
    explicit DuplicateDocId(const std::string& id) : Error("duplicate doc id: " + id) {}
};

class UnknownAttribute : public Error {
public:
    explicit UnknownAttribute(const std::string& attr)
        : Error("unknown attribute: " + attr), attribute(attr) {}
    std::string attribute;
};

class ArityError : public Error {
public:
    using Error::Error;
};

class UnrecognizedTemplate : public Error {
public:
    using Error::Error;
};

class EmptyCorpus : public Error {
public:
    EmptyCorpus() : Error("corpus is empty") {}
};

class EmptyGold : public Error {
public:
    EmptyGold() : Error("gold set is empty") {}
};

class TransportError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class MissingMetadata : public Error {
public:
    using Error::Error;
};

class StrictMissingQrels : public Error {
public:
    using Error::Error;
};

}  // namespace setcomp
