#pragma once

#include <stdexcept>
#include <string>

namespace flis {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Feature/weight dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

// SGD produced a non-finite gradient or weight; message names the step.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class AggregationError : public Error {
public:
    using Error::Error;
};

class MetricUnavailableError : public Error {
public:
    using Error::Error;
};

class DegenerateMatrixError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace flis
