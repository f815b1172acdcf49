#include "dst/cli.hpp"

int main(int argc, char** argv) { return dst::dispatch(argc, argv); }
