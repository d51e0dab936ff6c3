#include "bfn/cli.hpp"

int main(int argc, char** argv) { return bfn::cli::dispatch(argc, argv); }
