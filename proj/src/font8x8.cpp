#include "font8x8.hpp"

namespace pixeldoc {

const std::uint8_t kFontAtlas[kFontGlyphCount][8] = {
    {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00},  // ' '
    {0x30, 0x30, 0x30, 0x30, 0x30, 0x00, 0x30, 0x00},  // '!'
    {0x48, 0x48, 0x48, 0x00, 0x00, 0x00, 0x00, 0x00},  // '"'
    {0x48, 0x48, 0xfc, 0x48, 0xfc, 0x48, 0x48, 0x00},  // '#'
    {0x30, 0x7c, 0x80, 0x78, 0x02, 0xf8, 0x30, 0x00},  // '$'
    {0xc4, 0xc8, 0x10, 0x20, 0x40, 0x8c, 0x8c, 0x00},  // '%'
    {0x60, 0x90, 0x90, 0x60, 0x94, 0x88, 0x74, 0x00},  // '&'
    {0x30, 0x30, 0x20, 0x00, 0x00, 0x00, 0x00, 0x00},  // '''
    {0x18, 0x20, 0x40, 0x40, 0x40, 0x20, 0x18, 0x00},  // '('
    {0xc0, 0x20, 0x10, 0x10, 0x10, 0x20, 0xc0, 0x00},  // ')'
    {0x00, 0x48, 0x30, 0xfc, 0x30, 0x48, 0x00, 0x00},  // '*'
    {0x00, 0x20, 0x20, 0xf8, 0x20, 0x20, 0x00, 0x00},  // '+'
    {0x00, 0x00, 0x00, 0x00, 0x00, 0x30, 0x30, 0x40},  // ','
    {0x00, 0x00, 0x00, 0xf8, 0x00, 0x00, 0x00, 0x00},  // '-'
    {0x00, 0x00, 0x00, 0x00, 0x00, 0x30, 0x30, 0x00},  // '.'
    {0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x80, 0x00},  // '/'
    {0x78, 0x84, 0x8c, 0xb4, 0xc4, 0x84, 0x78, 0x00},  // '0'
    {0x20, 0x60, 0x20, 0x20, 0x20, 0x20, 0x70, 0x00},  // '1'
    {0x78, 0x84, 0x04, 0x18, 0x20, 0x40, 0xfc, 0x00},  // '2'
    {0x78, 0x84, 0x04, 0x38, 0x04, 0x84, 0x78, 0x00},  // '3'
    {0x18, 0x28, 0x48, 0x88, 0xfc, 0x08, 0x08, 0x00},  // '4'
    {0xfc, 0x80, 0xf8, 0x04, 0x04, 0x84, 0x78, 0x00},  // '5'
    {0x38, 0x40, 0x80, 0xf8, 0x84, 0x84, 0x78, 0x00},  // '6'
    {0xfc, 0x04, 0x08, 0x10, 0x20, 0x20, 0x20, 0x00},  // '7'
    {0x78, 0x84, 0x84, 0x78, 0x84, 0x84, 0x78, 0x00},  // '8'
    {0x78, 0x84, 0x84, 0x7c, 0x04, 0x08, 0x70, 0x00},  // '9'
    {0x00, 0x30, 0x30, 0x00, 0x30, 0x30, 0x00, 0x00},  // ':'
    {0x00, 0x30, 0x30, 0x00, 0x30, 0x30, 0x40, 0x00},  // ';'
    {0x08, 0x10, 0x20, 0x40, 0x20, 0x10, 0x08, 0x00},  // '<'
    {0x00, 0x00, 0xf8, 0x00, 0xf8, 0x00, 0x00, 0x00},  // '='
    {0x80, 0x40, 0x20, 0x10, 0x20, 0x40, 0x80, 0x00},  // '>'
    {0x78, 0x84, 0x04, 0x18, 0x20, 0x00, 0x20, 0x00},  // '?'
    {0x78, 0x84, 0xba, 0xaa, 0xbc, 0x80, 0x78, 0x00},  // '@'
    {0x30, 0x48, 0x84, 0x84, 0xfc, 0x84, 0x84, 0x00},  // 'A'
    {0xf8, 0x84, 0x84, 0xf8, 0x84, 0x84, 0xf8, 0x00},  // 'B'
    {0x78, 0x84, 0x80, 0x80, 0x80, 0x84, 0x78, 0x00},  // 'C'
    {0xf0, 0x88, 0x84, 0x84, 0x84, 0x88, 0xf0, 0x00},  // 'D'
    {0xfc, 0x80, 0x80, 0xf8, 0x80, 0x80, 0xfc, 0x00},  // 'E'
    {0xfc, 0x80, 0x80, 0xf8, 0x80, 0x80, 0x80, 0x00},  // 'F'
    {0x78, 0x84, 0x80, 0x9c, 0x84, 0x84, 0x78, 0x00},  // 'G'
    {0x84, 0x84, 0x84, 0xfc, 0x84, 0x84, 0x84, 0x00},  // 'H'
    {0x70, 0x20, 0x20, 0x20, 0x20, 0x20, 0x70, 0x00},  // 'I'
    {0x3c, 0x08, 0x08, 0x08, 0x08, 0x88, 0x70, 0x00},  // 'J'
    {0x84, 0x88, 0x90, 0xe0, 0x90, 0x88, 0x84, 0x00},  // 'K'
    {0x80, 0x80, 0x80, 0x80, 0x80, 0x80, 0xfc, 0x00},  // 'L'
    {0x84, 0xcc, 0xb4, 0xb4, 0x84, 0x84, 0x84, 0x00},  // 'M'
    {0x84, 0xc4, 0xa4, 0x94, 0x8c, 0x84, 0x84, 0x00},  // 'N'
    {0x78, 0x84, 0x84, 0x84, 0x84, 0x84, 0x78, 0x00},  // 'O'
    {0xf8, 0x84, 0x84, 0xf8, 0x80, 0x80, 0x80, 0x00},  // 'P'
    {0x78, 0x84, 0x84, 0x84, 0x94, 0x88, 0x74, 0x00},  // 'Q'
    {0xf8, 0x84, 0x84, 0xf8, 0x90, 0x88, 0x84, 0x00},  // 'R'
    {0x78, 0x84, 0x80, 0x78, 0x04, 0x84, 0x78, 0x00},  // 'S'
    {0xf8, 0x20, 0x20, 0x20, 0x20, 0x20, 0x20, 0x00},  // 'T'
    {0x84, 0x84, 0x84, 0x84, 0x84, 0x84, 0x78, 0x00},  // 'U'
    {0x84, 0x84, 0x84, 0x84, 0x48, 0x48, 0x30, 0x00},  // 'V'
    {0x84, 0x84, 0x84, 0xb4, 0xb4, 0xcc, 0x84, 0x00},  // 'W'
    {0x84, 0x48, 0x30, 0x30, 0x48, 0x84, 0x84, 0x00},  // 'X'
    {0x88, 0x88, 0x50, 0x20, 0x20, 0x20, 0x20, 0x00},  // 'Y'
    {0xfc, 0x04, 0x08, 0x30, 0x40, 0x80, 0xfc, 0x00},  // 'Z'
    {0x70, 0x40, 0x40, 0x40, 0x40, 0x40, 0x70, 0x00},  // '['
    {0x80, 0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x00},  // 'backslash'
    {0x70, 0x10, 0x10, 0x10, 0x10, 0x10, 0x70, 0x00},  // ']'
    {0x30, 0x48, 0x84, 0x00, 0x00, 0x00, 0x00, 0x00},  // '^'
    {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xfc},  // '_'
    {0x60, 0x30, 0x10, 0x00, 0x00, 0x00, 0x00, 0x00},  // '`'
    {0x00, 0x00, 0x78, 0x04, 0x7c, 0x84, 0x7c, 0x00},  // 'a'
    {0x80, 0x80, 0xf8, 0x84, 0x84, 0x84, 0xf8, 0x00},  // 'b'
    {0x00, 0x00, 0x78, 0x80, 0x80, 0x84, 0x78, 0x00},  // 'c'
    {0x04, 0x04, 0x7c, 0x84, 0x84, 0x84, 0x7c, 0x00},  // 'd'
    {0x00, 0x00, 0x78, 0x84, 0xfc, 0x80, 0x78, 0x00},  // 'e'
    {0x18, 0x20, 0x78, 0x20, 0x20, 0x20, 0x20, 0x00},  // 'f'
    {0x00, 0x00, 0x7c, 0x84, 0x84, 0x7c, 0x04, 0x78},  // 'g'
    {0x80, 0x80, 0xf8, 0x84, 0x84, 0x84, 0x84, 0x00},  // 'h'
    {0x20, 0x00, 0x60, 0x20, 0x20, 0x20, 0x70, 0x00},  // 'i'
    {0x08, 0x00, 0x18, 0x08, 0x08, 0x08, 0x88, 0x70},  // 'j'
    {0x80, 0x80, 0x88, 0x90, 0xe0, 0x90, 0x88, 0x00},  // 'k'
    {0x60, 0x20, 0x20, 0x20, 0x20, 0x20, 0x70, 0x00},  // 'l'
    {0x00, 0x00, 0xda, 0x92, 0x92, 0x92, 0x92, 0x00},  // 'm'
    {0x00, 0x00, 0xf8, 0x84, 0x84, 0x84, 0x84, 0x00},  // 'n'
    {0x00, 0x00, 0x78, 0x84, 0x84, 0x84, 0x78, 0x00},  // 'o'
    {0x00, 0x00, 0xf8, 0x84, 0x84, 0xf8, 0x80, 0x80},  // 'p'
    {0x00, 0x00, 0x7c, 0x84, 0x84, 0x7c, 0x04, 0x04},  // 'q'
    {0x00, 0x00, 0xb8, 0xc0, 0x80, 0x80, 0x80, 0x00},  // 'r'
    {0x00, 0x00, 0x78, 0x80, 0x78, 0x04, 0xf0, 0x00},  // 's'
    {0x20, 0x20, 0x78, 0x20, 0x20, 0x20, 0x18, 0x00},  // 't'
    {0x00, 0x00, 0x84, 0x84, 0x84, 0x8c, 0x74, 0x00},  // 'u'
    {0x00, 0x00, 0x84, 0x84, 0x48, 0x48, 0x30, 0x00},  // 'v'
    {0x00, 0x00, 0x92, 0x92, 0x92, 0x92, 0x6c, 0x00},  // 'w'
    {0x00, 0x00, 0x88, 0x50, 0x20, 0x50, 0x88, 0x00},  // 'x'
    {0x00, 0x00, 0x84, 0x84, 0x84, 0x7c, 0x04, 0x78},  // 'y'
    {0x00, 0x00, 0xf8, 0x10, 0x20, 0x40, 0xf8, 0x00},  // 'z'
    {0x18, 0x20, 0x20, 0x40, 0x20, 0x20, 0x18, 0x00},  // '{'
    {0x20, 0x20, 0x20, 0x20, 0x20, 0x20, 0x20, 0x00},  // '|'
    {0xc0, 0x20, 0x20, 0x10, 0x20, 0x20, 0xc0, 0x00},  // '}'
    {0x00, 0x00, 0x62, 0x92, 0x8c, 0x00, 0x00, 0x00},  // '~'
};

}  // namespace pixeldoc
