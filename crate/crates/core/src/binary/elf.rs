//! Minimal ELF reader and writer.
//!
//! Only what difference scoring needs: section headers, the `.text`
//! section, and function symbols from `.symtab`. Both classes and both
//! byte orders are supported.

use thiserror::Error;

const ELF_MAGIC: [u8; 4] = [0x7f, b'E', b'L', b'F'];

const ET_REL: u16 = 1;
const ET_EXEC: u16 = 2;
const SHT_PROGBITS: u32 = 1;
const SHT_SYMTAB: u32 = 2;
const SHT_STRTAB: u32 = 3;
const SHF_ALLOC: u64 = 0x2;
const SHF_EXECINSTR: u64 = 0x4;
const STT_OBJECT: u8 = 1;
const STT_FUNC: u8 = 2;
const STB_GLOBAL: u8 = 1;
const SHN_XINDEX: u16 = 0xffff;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ElfError {
    #[error("bad ELF magic")]
    BadMagic,
    #[error("unsupported ELF class {0}")]
    UnsupportedClass(u8),
    #[error("unsupported ELF data encoding {0}")]
    UnsupportedEncoding(u8),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("missing .text section")]
    MissingText,
    #[error("no symbols")]
    NoSymbols,
    #[error("invalid string table reference")]
    BadStringTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Elf32,
    Elf64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Default)]
pub struct SectionHeader {
    pub name: String,
    pub name_index: u32,
    pub kind: u32,
    pub flags: u64,
    pub addr: u64,
    pub offset: u64,
    pub size: u64,
    pub link: u32,
    pub entsize: u64,
}

/// A symbol table entry, already decoded.
#[derive(Debug, Clone)]
pub struct Symbol {
    pub name: String,
    pub value: u64,
    pub size: u64,
    pub kind: u8,
    pub section: u16,
}

impl Symbol {
    pub fn is_function(&self) -> bool {
        self.kind == STT_FUNC
    }
}

struct Reader<'a> {
    data: &'a [u8],
    class: Class,
    endian: Endian,
}

impl<'a> Reader<'a> {
    fn bytes(&self, at: u64, len: u64, what: &'static str) -> Result<&'a [u8], ElfError> {
        let start = usize::try_from(at).map_err(|_| ElfError::Truncated(what))?;
        let len = usize::try_from(len).map_err(|_| ElfError::Truncated(what))?;
        let end = start.checked_add(len).ok_or(ElfError::Truncated(what))?;
        self.data.get(start..end).ok_or(ElfError::Truncated(what))
    }

    fn u16(&self, at: u64, what: &'static str) -> Result<u16, ElfError> {
        let b: [u8; 2] = self.bytes(at, 2, what)?.try_into().unwrap();
        Ok(match self.endian {
            Endian::Little => u16::from_le_bytes(b),
            Endian::Big => u16::from_be_bytes(b),
        })
    }

    fn u32(&self, at: u64, what: &'static str) -> Result<u32, ElfError> {
        let b: [u8; 4] = self.bytes(at, 4, what)?.try_into().unwrap();
        Ok(match self.endian {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        })
    }

    fn u64(&self, at: u64, what: &'static str) -> Result<u64, ElfError> {
        let b: [u8; 8] = self.bytes(at, 8, what)?.try_into().unwrap();
        Ok(match self.endian {
            Endian::Little => u64::from_le_bytes(b),
            Endian::Big => u64::from_be_bytes(b),
        })
    }

    /// Native-word read: 4 bytes for ELF32, 8 for ELF64.
    fn word(&self, at: u64, what: &'static str) -> Result<u64, ElfError> {
        match self.class {
            Class::Elf32 => self.u32(at, what).map(u64::from),
            Class::Elf64 => self.u64(at, what),
        }
    }
}

/// A parsed view over ELF file bytes.
pub struct ElfFile<'a> {
    data: &'a [u8],
    pub class: Class,
    pub endian: Endian,
    pub file_type: u16,
    pub sections: Vec<SectionHeader>,
    reader: Reader<'a>,
}

impl<'a> ElfFile<'a> {
    pub fn parse(data: &'a [u8]) -> Result<Self, ElfError> {
        if data.len() < 16 || data[..4] != ELF_MAGIC {
            return Err(ElfError::BadMagic);
        }
        let class = match data[4] {
            1 => Class::Elf32,
            2 => Class::Elf64,
            c => return Err(ElfError::UnsupportedClass(c)),
        };
        let endian = match data[5] {
            1 => Endian::Little,
            2 => Endian::Big,
            e => return Err(ElfError::UnsupportedEncoding(e)),
        };
        let r = Reader { data, class, endian };
        let hdr = "file header";
        let file_type = r.u16(16, hdr)?;
        let (shoff, shentsize, mut shnum, mut shstrndx) = match class {
            Class::Elf32 => (
                u64::from(r.u32(32, hdr)?),
                r.u16(46, hdr)?,
                u64::from(r.u16(48, hdr)?),
                u32::from(r.u16(50, hdr)?),
            ),
            Class::Elf64 => (
                r.u64(40, hdr)?,
                r.u16(58, hdr)?,
                u64::from(r.u16(60, hdr)?),
                u32::from(r.u16(62, hdr)?),
            ),
        };
        let min_entsize = match class {
            Class::Elf32 => 40,
            Class::Elf64 => 64,
        };

        let mut sections = Vec::new();
        if shoff != 0 {
            if shentsize < min_entsize {
                return Err(ElfError::Truncated("section header entry"));
            }
            let entsize = u64::from(shentsize);
            let first = read_section(&r, shoff)?;
            if shnum == 0 {
                shnum = first.size;
            }
            if shstrndx == u32::from(SHN_XINDEX) {
                shstrndx = first.link;
            }
            let table_len = shnum.checked_mul(entsize).ok_or(ElfError::Truncated("section header table"))?;
            r.bytes(shoff, table_len, "section header table")?;
            sections.push(first);
            for i in 1..shnum {
                sections.push(read_section(&r, shoff + i * entsize)?);
            }
            if let Some(strtab) = sections.get(shstrndx as usize) {
                let names = r.bytes(strtab.offset, strtab.size, "section name table")?;
                for s in &mut sections {
                    s.name = c_str(names, s.name_index)?;
                }
            }
        }

        Ok(Self {
            data,
            class,
            endian,
            file_type,
            sections,
            reader: Reader { data, class, endian },
        })
    }

    pub fn section(&self, name: &str) -> Option<(usize, &SectionHeader)> {
        self.sections.iter().enumerate().find(|(_, s)| s.name == name)
    }

    pub fn section_data(&self, header: &SectionHeader) -> Result<&'a [u8], ElfError> {
        if header.kind == 8 {
            // SHT_NOBITS occupies no file space
            return Ok(&[]);
        }
        self.reader.bytes(header.offset, header.size, "section contents")
    }

    pub fn text(&self) -> Result<(usize, &SectionHeader, &'a [u8]), ElfError> {
        let (idx, header) = self.section(".text").ok_or(ElfError::MissingText)?;
        Ok((idx, header, self.section_data(header)?))
    }

    /// Decodes `.symtab`. A missing symbol table is [`ElfError::NoSymbols`].
    pub fn symbols(&self) -> Result<Vec<Symbol>, ElfError> {
        let symtab = self
            .sections
            .iter()
            .find(|s| s.kind == SHT_SYMTAB)
            .ok_or(ElfError::NoSymbols)?;
        let strtab = self
            .sections
            .get(symtab.link as usize)
            .ok_or(ElfError::BadStringTable)?;
        let names = self.section_data(strtab)?;
        let table = self.section_data(symtab)?;
        let entsize = match (symtab.entsize, self.class) {
            (0, Class::Elf32) => 16,
            (0, Class::Elf64) => 24,
            (n, _) => n,
        };
        let r = Reader {
            data: table,
            class: self.class,
            endian: self.endian,
        };
        let what = "symbol table";
        let count = table.len() as u64 / entsize;
        let mut out = Vec::with_capacity(count as usize);
        for i in 0..count {
            let at = i * entsize;
            let (name, value, size, info, shndx) = match self.class {
                Class::Elf32 => (
                    r.u32(at, what)?,
                    u64::from(r.u32(at + 4, what)?),
                    u64::from(r.u32(at + 8, what)?),
                    r.bytes(at + 12, 1, what)?[0],
                    r.u16(at + 14, what)?,
                ),
                Class::Elf64 => (
                    r.u32(at, what)?,
                    r.u64(at + 8, what)?,
                    r.u64(at + 16, what)?,
                    r.bytes(at + 4, 1, what)?[0],
                    r.u16(at + 6, what)?,
                ),
            };
            out.push(Symbol {
                name: c_str(names, name)?,
                value,
                size,
                kind: info & 0xf,
                section: shndx,
            });
        }
        Ok(out)
    }

    /// Offset of a symbol's value relative to the start of the section it
    /// lives in. Relocatable objects store section-relative values already.
    pub fn section_relative(&self, value: u64, section: &SectionHeader) -> Option<u64> {
        if self.file_type == ET_REL {
            Some(value)
        } else {
            value.checked_sub(section.addr)
        }
    }

    pub fn raw(&self) -> &'a [u8] {
        self.data
    }
}

fn read_section(r: &Reader<'_>, at: u64) -> Result<SectionHeader, ElfError> {
    let what = "section header";
    let name_idx = r.u32(at, what)?;
    let kind = r.u32(at + 4, what)?;
    let (flags, addr, offset, size, link, entsize) = match r.class {
        Class::Elf32 => (
            r.word(at + 8, what)?,
            r.word(at + 12, what)?,
            r.word(at + 16, what)?,
            r.word(at + 20, what)?,
            r.u32(at + 24, what)?,
            r.word(at + 36, what)?,
        ),
        Class::Elf64 => (
            r.word(at + 8, what)?,
            r.word(at + 16, what)?,
            r.word(at + 24, what)?,
            r.word(at + 32, what)?,
            r.u32(at + 40, what)?,
            r.word(at + 56, what)?,
        ),
    };
    Ok(SectionHeader {
        name: String::new(),
        name_index: name_idx,
        kind,
        flags,
        addr,
        offset,
        size,
        link,
        entsize,
    })
}

fn c_str(table: &[u8], index: u32) -> Result<String, ElfError> {
    let tail = table.get(index as usize..).ok_or(ElfError::BadStringTable)?;
    let end = tail.iter().position(|&b| b == 0).ok_or(ElfError::BadStringTable)?;
    Ok(String::from_utf8_lossy(&tail[..end]).into_owned())
}

/// Kind of a symbol emitted by [`ElfImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Function,
    Object,
}

/// A symbol to emit, positioned relative to the start of `.text`.
#[derive(Debug, Clone)]
pub struct SymbolDef {
    pub name: String,
    pub offset: u64,
    pub size: u64,
    pub kind: SymbolKind,
}

/// Description of a small executable ELF to serialize.
///
/// Layout: header, `.text`, extra sections, `.symtab`, `.strtab`,
/// `.shstrtab`, then the section header table. No program headers.
#[derive(Debug, Clone)]
pub struct ElfImage {
    pub class: Class,
    pub endian: Endian,
    pub text_addr: u64,
    pub text: Vec<u8>,
    pub extra_sections: Vec<(String, Vec<u8>)>,
    pub symbols: Vec<SymbolDef>,
    pub strip: bool,
}

impl ElfImage {
    pub fn new(text: Vec<u8>) -> Self {
        Self {
            class: Class::Elf64,
            endian: Endian::Little,
            text_addr: 0x40_1000,
            text,
            extra_sections: Vec::new(),
            symbols: Vec::new(),
            strip: false,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer {
            out: Vec::new(),
            class: self.class,
            endian: self.endian,
        };
        let (ehsize, shentsize, symentsize) = match self.class {
            Class::Elf32 => (52u64, 40u64, 16u64),
            Class::Elf64 => (64, 64, 24),
        };

        // (name, kind, flags, addr, data, link, info, entsize)
        let mut sections: Vec<(String, u32, u64, u64, Vec<u8>, u32, u32, u64)> = Vec::new();
        sections.push((
            ".text".into(),
            SHT_PROGBITS,
            SHF_ALLOC | SHF_EXECINSTR,
            self.text_addr,
            self.text.clone(),
            0,
            0,
            0,
        ));
        for (name, data) in &self.extra_sections {
            sections.push((name.clone(), SHT_PROGBITS, 0, 0, data.clone(), 0, 0, 0));
        }
        if !self.strip {
            let mut strtab = vec![0u8];
            let mut symtab = Writer {
                out: Vec::new(),
                class: self.class,
                endian: self.endian,
            };
            // null symbol
            symtab.out.resize(symentsize as usize, 0);
            for sym in &self.symbols {
                let name = strtab.len() as u32;
                strtab.extend_from_slice(sym.name.as_bytes());
                strtab.push(0);
                let kind = match sym.kind {
                    SymbolKind::Function => STT_FUNC,
                    SymbolKind::Object => STT_OBJECT,
                };
                let info = (STB_GLOBAL << 4) | kind;
                let value = self.text_addr + sym.offset;
                // .text is section index 1
                match self.class {
                    Class::Elf32 => {
                        symtab.u32(name);
                        symtab.u32(value as u32);
                        symtab.u32(sym.size as u32);
                        symtab.out.push(info);
                        symtab.out.push(0);
                        symtab.u16(1);
                    }
                    Class::Elf64 => {
                        symtab.u32(name);
                        symtab.out.push(info);
                        symtab.out.push(0);
                        symtab.u16(1);
                        symtab.u64(value);
                        symtab.u64(sym.size);
                    }
                }
            }
            let strtab_index = sections.len() as u32 + 2;
            sections.push((".symtab".into(), SHT_SYMTAB, 0, 0, symtab.out, strtab_index, 1, symentsize));
            sections.push((".strtab".into(), SHT_STRTAB, 0, 0, strtab, 0, 0, 0));
        }
        let mut shstrtab = vec![0u8];
        let mut name_offsets = Vec::new();
        for s in &sections {
            name_offsets.push(shstrtab.len() as u32);
            shstrtab.extend_from_slice(s.0.as_bytes());
            shstrtab.push(0);
        }
        name_offsets.push(shstrtab.len() as u32);
        shstrtab.extend_from_slice(b".shstrtab\0");
        sections.push((".shstrtab".into(), SHT_STRTAB, 0, 0, shstrtab, 0, 0, 0));

        // lay out section contents after the header
        let mut offsets = Vec::new();
        let mut cursor = ehsize;
        for s in &sections {
            cursor = cursor.next_multiple_of(16);
            offsets.push(cursor);
            cursor += s.4.len() as u64;
        }
        let shoff = cursor.next_multiple_of(8);
        let shnum = sections.len() as u16 + 1;
        let shstrndx = shnum - 1;

        w.out.extend_from_slice(&ELF_MAGIC);
        w.out.push(match self.class {
            Class::Elf32 => 1,
            Class::Elf64 => 2,
        });
        w.out.push(match self.endian {
            Endian::Little => 1,
            Endian::Big => 2,
        });
        w.out.push(1); // EV_CURRENT
        w.out.resize(16, 0);
        w.u16(ET_EXEC);
        w.u16(match self.class {
            Class::Elf32 => 3,
            Class::Elf64 => 62,
        });
        w.u32(1);
        w.word(self.text_addr); // entry
        w.word(0); // phoff
        w.word(shoff);
        w.u32(0); // flags
        w.u16(ehsize as u16);
        w.u16(0); // phentsize
        w.u16(0); // phnum
        w.u16(shentsize as u16);
        w.u16(shnum);
        w.u16(shstrndx);
        debug_assert_eq!(w.out.len() as u64, ehsize);

        for (s, &off) in sections.iter().zip(&offsets) {
            w.out.resize(off as usize, 0);
            w.out.extend_from_slice(&s.4);
        }
        w.out.resize(shoff as usize, 0);
        w.out.resize(w.out.len() + shentsize as usize, 0); // null section
        for ((s, &off), &name) in sections.iter().zip(&offsets).zip(&name_offsets) {
            let (_, kind, flags, addr, data, link, info, entsize) = s;
            w.u32(name);
            w.u32(*kind);
            w.word(*flags);
            w.word(*addr);
            w.word(off);
            w.word(data.len() as u64);
            w.u32(*link);
            w.u32(*info);
            w.word(if *kind == SHT_PROGBITS && *flags != 0 { 16 } else { 1 });
            w.word(*entsize);
        }
        w.out
    }
}

struct Writer {
    out: Vec<u8>,
    class: Class,
    endian: Endian,
}

impl Writer {
    fn u16(&mut self, v: u16) {
        match self.endian {
            Endian::Little => self.out.extend_from_slice(&v.to_le_bytes()),
            Endian::Big => self.out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn u32(&mut self, v: u32) {
        match self.endian {
            Endian::Little => self.out.extend_from_slice(&v.to_le_bytes()),
            Endian::Big => self.out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn u64(&mut self, v: u64) {
        match self.endian {
            Endian::Little => self.out.extend_from_slice(&v.to_le_bytes()),
            Endian::Big => self.out.extend_from_slice(&v.to_be_bytes()),
        }
    }

    fn word(&mut self, v: u64) {
        match self.class {
            Class::Elf32 => self.u32(v as u32),
            Class::Elf64 => self.u64(v),
        }
    }
}
