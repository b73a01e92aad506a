#pragma once

#include "sse/cluster_assign.hpp"
#include "sse/codebook.hpp"
#include "sse/embed_layer.hpp"
#include "sse/io.hpp"
#include "sse/kmeans.hpp"
#include "sse/radix.hpp"
#include "sse/types.hpp"
