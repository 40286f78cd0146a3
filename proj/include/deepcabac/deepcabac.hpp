#pragma once

#include "deepcabac/bitio.hpp"
#include "deepcabac/binarizer.hpp"
#include "deepcabac/cabac.hpp"
#include "deepcabac/codec.hpp"
#include "deepcabac/container.hpp"
#include "deepcabac/errors.hpp"
#include "deepcabac/huffman.hpp"
#include "deepcabac/ingest.hpp"
#include "deepcabac/npy.hpp"
#include "deepcabac/pipeline.hpp"
#include "deepcabac/quantizers.hpp"
