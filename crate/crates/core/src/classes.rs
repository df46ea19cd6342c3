//! Semantic class palette. Channel 0 is empty space; 1..=11 are occupied classes.

use serde::{Deserialize, Serialize};

pub const NUM_CLASSES: usize = 12;
pub const NUM_SEMANTIC: usize = NUM_CLASSES - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum SemanticClass {
    Empty = 0,
    Ceiling = 1,
    Floor = 2,
    Wall = 3,
    Window = 4,
    Chair = 5,
    Bed = 6,
    Sofa = 7,
    Table = 8,
    Tvs = 9,
    Furniture = 10,
    Objects = 11,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; NUM_CLASSES] = [
        SemanticClass::Empty,
        SemanticClass::Ceiling,
        SemanticClass::Floor,
        SemanticClass::Wall,
        SemanticClass::Window,
        SemanticClass::Chair,
        SemanticClass::Bed,
        SemanticClass::Sofa,
        SemanticClass::Table,
        SemanticClass::Tvs,
        SemanticClass::Furniture,
        SemanticClass::Objects,
    ];

    /// Classes a free-standing scene object may carry.
    pub const OBJECT_CLASSES: [SemanticClass; 8] = [
        SemanticClass::Window,
        SemanticClass::Chair,
        SemanticClass::Bed,
        SemanticClass::Sofa,
        SemanticClass::Table,
        SemanticClass::Tvs,
        SemanticClass::Furniture,
        SemanticClass::Objects,
    ];

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Empty => "empty",
            SemanticClass::Ceiling => "ceiling",
            SemanticClass::Floor => "floor",
            SemanticClass::Wall => "wall",
            SemanticClass::Window => "window",
            SemanticClass::Chair => "chair",
            SemanticClass::Bed => "bed",
            SemanticClass::Sofa => "sofa",
            SemanticClass::Table => "table",
            SemanticClass::Tvs => "tvs",
            SemanticClass::Furniture => "furniture",
            SemanticClass::Objects => "objects",
        }
    }

    pub fn is_structural(self) -> bool {
        matches!(
            self,
            SemanticClass::Ceiling | SemanticClass::Floor | SemanticClass::Wall
        )
    }

    /// Display color used for point-cloud export.
    pub fn color(self) -> [u8; 3] {
        match self {
            SemanticClass::Empty => [0, 0, 0],
            SemanticClass::Ceiling => [214, 38, 40],
            SemanticClass::Floor => [43, 160, 4],
            SemanticClass::Wall => [158, 216, 229],
            SemanticClass::Window => [114, 158, 206],
            SemanticClass::Chair => [204, 204, 91],
            SemanticClass::Bed => [255, 186, 119],
            SemanticClass::Sofa => [147, 102, 188],
            SemanticClass::Table => [30, 119, 181],
            SemanticClass::Tvs => [160, 188, 33],
            SemanticClass::Furniture => [255, 127, 12],
            SemanticClass::Objects => [196, 175, 214],
        }
    }
}
