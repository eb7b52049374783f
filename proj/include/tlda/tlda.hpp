#ifndef TLDA_TLDA_HPP
#define TLDA_TLDA_HPP

#include "tlda/error.hpp"
#include "tlda/io.hpp"
#include "tlda/corpus.hpp"
#include "tlda/tensor.hpp"
#include "tlda/moments.hpp"
#include "tlda/decomposition.hpp"
#include "tlda/recovery.hpp"
#include "tlda/inference.hpp"
#include "tlda/evaluation.hpp"
#include "tlda/config.hpp"

#endif
