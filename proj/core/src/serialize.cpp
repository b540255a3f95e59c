#include "ftsim/serialize.hpp"

// Header-only today; the translation unit pins the module into the library
// so downstream link lines stay stable if out-of-line parts appear later.
