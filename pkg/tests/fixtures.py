"""Shared fixture documents and repository builders used across the tests."""

from pathlib import Path

LIBRARY_ECORE = """<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="library" nsURI="http://example.org/library" nsPrefix="library">
  <eClassifiers xsi:type="ecore:EClass" name="Library">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="name" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="books" eType="#//Book" containment="true" upperBound="-1"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="members" eType="#//Member" containment="true" upperBound="-1"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Book">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="title" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="pages" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EInt"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="borrowedBy" eType="#//Member" eOpposite="#//Member/borrowed"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Member">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="memberName" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="borrowed" eType="#//Book" upperBound="-1" eOpposite="#//Book/borrowedBy"/>
  </eClassifiers>
</ecore:EPackage>
"""

# The Member side carries the borrow link here on purpose: parsing must
# reconcile it onto Book.borrowedBy as well.
ALEXANDRIA_XMI = """<?xml version="1.0" encoding="UTF-8"?>
<library:Library xmlns:library="http://example.org/library" name="Alexandria">
  <books title="Ulysses" pages="730"/>
  <books title="Dune" pages="412"/>
  <members memberName="Ada" borrowed="//@books.1"/>
</library:Library>
"""

# Abstract supertype, two concrete subtypes, a plain reference (star), and a
# bidirectional pair (Keeper.assigned <-> Animal.keeper).
ZOO_ECORE = """<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="zoo" nsURI="http://example.org/zoo" nsPrefix="zoo">
  <eClassifiers xsi:type="ecore:EClass" name="Zoo">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="zooName" lowerBound="1" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="animals" eType="#//Animal" containment="true" upperBound="-1"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="keepers" eType="#//Keeper" containment="true" upperBound="-1"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="star" eType="#//Animal"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Animal" abstract="true">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="animalName" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="keeper" eType="#//Keeper" eOpposite="#//Keeper/assigned"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Lion" eSuperTypes="#//Animal">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="mane" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EBoolean"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Penguin" eSuperTypes="#//Animal">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="beakLength" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EDouble"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Keeper">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="keeperName" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="assigned" eType="#//Animal" upperBound="-1" eOpposite="#//Animal/keeper"/>
  </eClassifiers>
</ecore:EPackage>
"""

SAVANNA_XMI = """<?xml version="1.0" encoding="UTF-8"?>
<zoo:Zoo xmlns:zoo="http://example.org/zoo" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" zooName="Savanna" star="//@animals.1">
  <animals xsi:type="zoo:Lion" animalName="Leo" mane="true"/>
  <animals xsi:type="zoo:Penguin" animalName="Pingu" beakLength="3.5"/>
  <keepers keeperName="Kim" assigned="//@animals.0"/>
</zoo:Zoo>
"""

# Two containments accept the same class, which makes unqualified creation
# ambiguous, and Novel extends Book for subtype reads.
PRESS_ECORE = """<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="press" nsURI="http://example.org/press" nsPrefix="press">
  <eClassifiers xsi:type="ecore:EClass" name="Shelf">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="label" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="fiction" eType="#//Book" containment="true" upperBound="-1"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="nonfiction" eType="#//Book" containment="true" upperBound="-1"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Book">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="title" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="Novel" eSuperTypes="#//Book">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="genre" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
  </eClassifiers>
</ecore:EPackage>
"""

STACKS_XMI = """<?xml version="1.0" encoding="UTF-8"?>
<press:Shelf xmlns:press="http://example.org/press" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" label="stacks">
  <fiction xsi:type="press:Novel" title="Emma" genre="romance"/>
  <nonfiction title="Kernels"/>
</press:Shelf>
"""

# Supertype cycle: installing this must be rejected.
BROKEN_ECORE = """<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="library" nsURI="http://example.org/library" nsPrefix="library">
  <eClassifiers xsi:type="ecore:EClass" name="Library" eSuperTypes="#//Book"/>
  <eClassifiers xsi:type="ecore:EClass" name="Book" eSuperTypes="#//Library"/>
</ecore:EPackage>
"""


def metamodel_text_of(
    package: str, root_class: str, child_class: str, root_attr: str, child_attr: str
) -> str:
    """A minimal two-class package: root holds children in an unbounded slot."""
    return f"""<?xml version="1.0" encoding="UTF-8"?>
<ecore:EPackage xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" name="{package}" nsURI="http://example.org/{package}" nsPrefix="{package}">
  <eClassifiers xsi:type="ecore:EClass" name="{root_class}">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="{root_attr}" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
    <eStructuralFeatures xsi:type="ecore:EReference" name="items" eType="#//{child_class}" containment="true" upperBound="-1"/>
  </eClassifiers>
  <eClassifiers xsi:type="ecore:EClass" name="{child_class}">
    <eStructuralFeatures xsi:type="ecore:EAttribute" name="{child_attr}" eType="ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//EString"/>
  </eClassifiers>
</ecore:EPackage>
"""


def write_package(base: Path, name: str, ecore: str, models: dict = ()) -> Path:
    package_dir = base / name
    package_dir.mkdir(parents=True, exist_ok=True)
    (package_dir / f"{name}.ecore").write_text(ecore, encoding="utf-8")
    for model_name, text in dict(models).items():
        (package_dir / f"{model_name}.xmi").write_text(text, encoding="utf-8")
    return package_dir


def library_repo(base: Path) -> Path:
    write_package(base, "library", LIBRARY_ECORE, {"alexandria": ALEXANDRIA_XMI})
    return base


def full_repo(base: Path) -> Path:
    write_package(base, "library", LIBRARY_ECORE, {"alexandria": ALEXANDRIA_XMI})
    write_package(base, "zoo", ZOO_ECORE, {"savanna": SAVANNA_XMI})
    write_package(base, "press", PRESS_ECORE, {"stacks": STACKS_XMI})
    return base
