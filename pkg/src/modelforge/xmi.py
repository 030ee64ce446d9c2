"""Reading and writing metamodel and model documents.

Parsing is namespace-aware and strict about the accepted dialect; every
rejection says which element or attribute broke the rules.  Serialization is
hand-rendered so output is canonical byte for byte: fixed attribute order,
two-space indentation, self-closing empty elements, defaults omitted.
"""

from __future__ import annotations

import io
import re
import xml.etree.ElementTree as ET
from typing import Optional, Union

from .errors import (
    AbstractInstantiation,
    DanglingPath,
    DialectViolation,
    MalformedXml,
    MetamodelDefectError,
    NotATree,
    UnknownClass,
    UnknownFeature,
    ValueParseError,
)
from .instances import FragmentPath, ModelObject, ModelResource, create_object, resolve_fragment_path
from .metamodel import (
    IDENTIFIER_RE,
    Attribute,
    DataTypeKind,
    MetaClass,
    Metamodel,
    Multiplicity,
    Reference,
    data_type_for,
    parse_value,
    render_value,
    validate_metamodel,
)

ECORE_NS = "http://www.eclipse.org/emf/2002/Ecore"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"
XMI_NS = "http://www.omg.org/XMI"

_XSI_TYPE = f"{{{XSI_NS}}}type"

_XML_DECLARATION = '<?xml version="1.0" encoding="UTF-8"?>'


def _parse_document(data: Union[bytes, str]) -> tuple[ET.Element, dict]:
    """Parse bytes into an element tree plus the document's prefix map."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    nsmap: dict[str, str] = {}
    it = ET.iterparse(io.BytesIO(data), events=("start-ns",))
    try:
        for _event, (prefix, uri) in it:
            nsmap[prefix] = uri
        root = it.root  # type: ignore[attr-defined]
    except ET.ParseError as exc:
        raise MalformedXml(f"not well-formed XML: {exc}") from None
    return root, nsmap


def _split_tag(tag: str) -> tuple[str, str]:
    if tag.startswith("{"):
        uri, _, local = tag[1:].partition("}")
        return uri, local
    return "", tag


def _resolve_qname(qname: str, nsmap: dict, context: str) -> tuple[str, str]:
    prefix, sep, local = qname.partition(":")
    if not sep:
        raise DialectViolation(f"{context}: {qname!r} has no namespace prefix")
    uri = nsmap.get(prefix)
    if uri is None:
        raise DialectViolation(f"{context}: undeclared prefix {prefix!r}")
    return uri, local


def _identifier(value: str, context: str) -> str:
    if not IDENTIFIER_RE.match(value):
        raise DialectViolation(f"{context}: {value!r} is not a valid identifier")
    return value


def _require(attrib: dict, name: str, context: str) -> str:
    value = attrib.get(name)
    if value is None:
        raise DialectViolation(f"{context}: missing required attribute {name!r}")
    return value


_BOUND_RE = re.compile(r"-?[0-9]+\Z")


def _bound(attrib: dict, name: str, default: int, context: str) -> int:
    raw = attrib.get(name)
    if raw is None:
        return default
    if not _BOUND_RE.match(raw):
        raise DialectViolation(f"{context}: {name}={raw!r} is not an integer")
    return int(raw)


def _flag(attrib: dict, name: str, context: str) -> bool:
    raw = attrib.get(name)
    if raw is None:
        return False
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise DialectViolation(f"{context}: {name}={raw!r} must be 'true' or 'false'")


def _class_fragment(raw: str, context: str) -> str:
    if not raw.startswith("#//"):
        raise DialectViolation(f"{context}: expected '#//ClassName', got {raw!r}")
    return _identifier(raw[3:], context)


# ---------------------------------------------------------------------------
# Metamodel documents

def parse_metamodel(data: Union[bytes, str]) -> Metamodel:
    """Read one EPackage document; raises on dialect or structural defects."""
    root, nsmap = _parse_document(data)
    uri, local = _split_tag(root.tag)
    if (uri, local) != (ECORE_NS, "EPackage"):
        raise DialectViolation(f"root element must be ecore:EPackage, got {root.tag!r}")

    attrib = dict(root.attrib)
    attrib.pop(f"{{{XMI_NS}}}version", None)
    name = _identifier(_require(attrib, "name", "EPackage"), "EPackage name")
    ns_uri = _require(attrib, "nsURI", "EPackage")
    ns_prefix = _identifier(_require(attrib, "nsPrefix", "EPackage"), "EPackage nsPrefix")
    for extra in set(attrib) - {"name", "nsURI", "nsPrefix"}:
        raise DialectViolation(f"EPackage: unexpected attribute {extra!r}")

    classes = []
    for element in root:
        _, tag = _split_tag(element.tag)
        if tag != "eClassifiers":
            raise DialectViolation(f"EPackage: unexpected child element {element.tag!r}")
        classes.append(_parse_class(element, nsmap))

    metamodel = Metamodel(name, ns_uri, ns_prefix, tuple(classes))
    defects = validate_metamodel(metamodel)
    if defects:
        first = defects[0]
        raise MetamodelDefectError(
            f"{first.code} at {first.qualified_name}: {first.message}",
            details=[
                {"code": d.code, "element": d.qualified_name, "message": d.message}
                for d in defects
            ],
        )
    return metamodel


def _parse_class(element: ET.Element, nsmap: dict) -> MetaClass:
    xsi = element.attrib.get(_XSI_TYPE)
    if xsi is None or _resolve_qname(xsi, nsmap, "eClassifiers") != (ECORE_NS, "EClass"):
        raise DialectViolation(f"eClassifiers: xsi:type must be ecore:EClass, got {xsi!r}")
    name = _identifier(_require(element.attrib, "name", "EClass"), "EClass name")
    ctx = f"EClass {name}"
    abstract = _flag(element.attrib, "abstract", ctx)
    supers = tuple(
        _class_fragment(token, f"{ctx} eSuperTypes")
        for token in element.attrib.get("eSuperTypes", "").split()
    )
    allowed = {_XSI_TYPE, "name", "abstract", "eSuperTypes"}
    for extra in set(element.attrib) - allowed:
        raise DialectViolation(f"{ctx}: unexpected attribute {extra!r}")

    attributes: list[Attribute] = []
    references: list[Reference] = []
    for child in element:
        _, tag = _split_tag(child.tag)
        if tag != "eStructuralFeatures":
            raise DialectViolation(f"{ctx}: unexpected child element {child.tag!r}")
        feature = _parse_feature(child, nsmap, ctx)
        if isinstance(feature, Attribute):
            attributes.append(feature)
        else:
            references.append(feature)
    return MetaClass(name, abstract, supers, tuple(attributes), tuple(references))


def _parse_feature(element: ET.Element, nsmap: dict, ctx: str):
    xsi = element.attrib.get(_XSI_TYPE)
    if xsi is None:
        raise DialectViolation(f"{ctx}: eStructuralFeatures needs an xsi:type")
    kind = _resolve_qname(xsi, nsmap, ctx)
    name = _identifier(
        _require(element.attrib, "name", f"{ctx} feature"), f"{ctx} feature name"
    )
    fctx = f"{ctx}.{name}"
    if len(element) > 0:
        raise DialectViolation(f"{fctx}: features cannot have child elements")
    lower = _bound(element.attrib, "lowerBound", 0, fctx)
    upper = _bound(element.attrib, "upperBound", 1, fctx)
    multiplicity = Multiplicity(lower, upper)
    e_type = _require(element.attrib, "eType", fctx)

    if kind == (ECORE_NS, "EAttribute"):
        allowed = {_XSI_TYPE, "name", "eType", "lowerBound", "upperBound"}
        for extra in set(element.attrib) - allowed:
            raise DialectViolation(f"{fctx}: unexpected attribute {extra!r}")
        # eType looks like "ecore:EDataType http://...Ecore#//EString"; the
        # datatype name after "#//" is all that matters.
        _, _, fragment = e_type.rpartition("#//")
        data_type = data_type_for(fragment)
        if data_type is None:
            raise DialectViolation(f"{fctx}: unsupported data type {e_type!r}")
        return Attribute(name, data_type, multiplicity)

    if kind == (ECORE_NS, "EReference"):
        allowed = {
            _XSI_TYPE,
            "name",
            "eType",
            "containment",
            "eOpposite",
            "lowerBound",
            "upperBound",
        }
        for extra in set(element.attrib) - allowed:
            raise DialectViolation(f"{fctx}: unexpected attribute {extra!r}")
        target = _class_fragment(e_type, f"{fctx} eType")
        containment = _flag(element.attrib, "containment", fctx)
        opposite = element.attrib.get("eOpposite")
        opposite_name: Optional[str] = None
        if opposite is not None:
            if not opposite.startswith("#//"):
                raise DialectViolation(
                    f"{fctx}: eOpposite must look like '#//Class/feature', got {opposite!r}"
                )
            owner, sep, feature_name = opposite[3:].partition("/")
            if not sep or owner != target:
                raise DialectViolation(
                    f"{fctx}: eOpposite {opposite!r} must live on the target class {target!r}"
                )
            opposite_name = _identifier(feature_name, f"{fctx} eOpposite")
        return Reference(name, target, containment, opposite_name, multiplicity)

    raise DialectViolation(
        f"{ctx}: eStructuralFeatures xsi:type must be ecore:EAttribute or "
        f"ecore:EReference, got {xsi!r}"
    )


def _escape(value: str) -> str:
    value = (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
    return value.replace("\t", "&#x9;").replace("\n", "&#xA;").replace("\r", "&#xD;")


def _render_element(tag: str, attrs: list[tuple[str, str]], children: list[str], indent: str) -> list[str]:
    head = indent + "<" + tag + "".join(f' {k}="{_escape(v)}"' for k, v in attrs)
    if not children:
        return [head + "/>"]
    return [head + ">"] + children + [f"{indent}</{tag}>"]


def serialize_metamodel(metamodel: Metamodel) -> bytes:
    """Canonical EPackage document for the metamodel."""
    children: list[str] = []
    for c in metamodel.classes:
        attrs = [("xsi:type", "ecore:EClass"), ("name", c.name)]
        if c.is_abstract:
            attrs.append(("abstract", "true"))
        if c.super_type_names:
            attrs.append(("eSuperTypes", " ".join(f"#//{s}" for s in c.super_type_names)))
        feature_lines: list[str] = []
        for f in c.own_features:
            feature_lines.extend(
                _render_element("eStructuralFeatures", _feature_attrs(f), [], "    ")
            )
        children.extend(_render_element("eClassifiers", attrs, feature_lines, "  "))

    root_attrs = [
        ("xmlns:ecore", ECORE_NS),
        ("xmlns:xsi", XSI_NS),
        ("name", metamodel.package_name),
        ("nsURI", metamodel.ns_uri),
        ("nsPrefix", metamodel.ns_prefix),
    ]
    lines = [_XML_DECLARATION]
    lines.extend(_render_element("ecore:EPackage", root_attrs, children, ""))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _feature_attrs(feature) -> list[tuple[str, str]]:
    if isinstance(feature, Attribute):
        attrs = [
            ("xsi:type", "ecore:EAttribute"),
            ("name", feature.name),
            ("eType", f"ecore:EDataType {ECORE_NS}#//{feature.data_type.value}"),
        ]
    else:
        attrs = [
            ("xsi:type", "ecore:EReference"),
            ("name", feature.name),
            ("eType", f"#//{feature.target_class_name}"),
        ]
        if feature.containment:
            attrs.append(("containment", "true"))
        if feature.opposite_name is not None:
            attrs.append(
                ("eOpposite", f"#//{feature.target_class_name}/{feature.opposite_name}")
            )
    m = feature.multiplicity
    if m.lower != 0:
        attrs.append(("lowerBound", str(m.lower)))
    if m.upper != 1:
        attrs.append(("upperBound", str(m.upper)))
    return attrs


# ---------------------------------------------------------------------------
# Model documents

def parse_model(data: Union[bytes, str], metamodel: Metamodel, model_name: str = "") -> ModelResource:
    """Read one model document typed by the given metamodel.

    Containment comes from element nesting, non-containment references from
    space-separated fragment paths; afterwards every bidirectional pair is
    reconciled so that stating either side (or both) yields the same graph.
    """
    root_el, nsmap = _parse_document(data)
    uri, local = _split_tag(root_el.tag)
    if uri != metamodel.ns_uri:
        raise DialectViolation(
            f"root element namespace {uri!r} does not match the package "
            f"nsURI {metamodel.ns_uri!r}"
        )
    root_class = metamodel.class_named(local)
    if root_class is None:
        raise UnknownClass(f"package {metamodel.package_name!r} has no class {local!r}")
    if root_class.is_abstract:
        raise AbstractInstantiation(f"root class {local!r} is abstract")

    resource = ModelResource(model_name, metamodel.package_name, ModelObject(0, local))
    pending: list[tuple[ModelObject, Reference, str]] = []

    def build(element: ET.Element, meta_class: MetaClass) -> ModelObject:
        obj = create_object(metamodel, meta_class, resource.allocate_id())
        ctx = f"{meta_class.name}"
        for attr_name, raw in element.attrib.items():
            if attr_name == _XSI_TYPE:
                continue
            if attr_name.startswith("{"):
                raise DialectViolation(f"{ctx}: unexpected namespaced attribute {attr_name!r}")
            feature = metamodel.feature_named(meta_class, attr_name)
            if feature is None:
                raise UnknownFeature(f"class {ctx!r} has no feature {attr_name!r}")
            if isinstance(feature, Attribute):
                try:
                    obj.attributes[attr_name] = parse_value(feature.data_type, raw)
                except ValueError as exc:
                    raise ValueParseError(f"{ctx}.{attr_name}: {exc}") from None
            elif feature.containment:
                raise DialectViolation(
                    f"{ctx}: containment {attr_name!r} cannot be an XML attribute"
                )
            else:
                pending.append((obj, feature, raw))
        if element.text and element.text.strip():
            raise DialectViolation(f"{ctx}: unexpected text content")
        for child_el in element:
            child_uri, child_tag = _split_tag(child_el.tag)
            if child_uri:
                raise DialectViolation(f"{ctx}: unexpected namespaced element {child_el.tag!r}")
            feature = metamodel.feature_named(meta_class, child_tag)
            if feature is None:
                raise UnknownFeature(f"class {ctx!r} has no feature {child_tag!r}")
            if not isinstance(feature, Reference) or not feature.containment:
                raise DialectViolation(
                    f"{ctx}: feature {child_tag!r} is not a containment and cannot "
                    f"be a child element"
                )
            child_class = _effective_class(child_el, feature, metamodel, nsmap)
            obj.containments[child_tag].append(build(child_el, child_class))
        return obj

    resource.root = build(root_el, root_class)

    # Second pass: fragment paths can point forward, so resolve them only
    # once the whole tree exists.
    for obj, feature, raw in pending:
        for token in raw.split():
            target = resolve_fragment_path(resource, FragmentPath.parse(token))
            if target.object_id not in obj.references[feature.name]:
                obj.references[feature.name].append(target.object_id)

    _reconcile_opposites(resource, metamodel)
    return resource


def _effective_class(
    element: ET.Element, feature: Reference, metamodel: Metamodel, nsmap: dict
) -> MetaClass:
    xsi = element.attrib.get(_XSI_TYPE)
    if xsi is None:
        declared = metamodel.class_named(feature.target_class_name)
        if declared is None:
            raise UnknownClass(
                f"feature {feature.name!r} targets unknown class "
                f"{feature.target_class_name!r}"
            )
        if declared.is_abstract:
            raise AbstractInstantiation(
                f"feature {feature.name!r} targets abstract class {declared.name!r}; "
                f"an xsi:type naming a concrete subtype is required"
            )
        return declared
    uri, local = _resolve_qname(xsi, nsmap, f"feature {feature.name}")
    if uri != metamodel.ns_uri:
        raise DialectViolation(
            f"feature {feature.name!r}: xsi:type {xsi!r} is not in the package namespace"
        )
    effective = metamodel.class_named(local)
    if effective is None:
        raise UnknownClass(f"package {metamodel.package_name!r} has no class {local!r}")
    if effective.is_abstract:
        raise AbstractInstantiation(f"xsi:type names abstract class {local!r}")
    return effective


def _reconcile_opposites(resource: ModelResource, metamodel: Metamodel) -> None:
    id_map = {obj.object_id: obj for obj in resource.objects()}
    for obj in resource.objects():
        meta_class = metamodel.class_named(obj.class_name)
        if meta_class is None:
            continue
        for feature in metamodel.all_features(meta_class):
            if not isinstance(feature, Reference) or feature.opposite_name is None:
                continue
            back_name = feature.opposite_name
            if feature.containment:
                for child in obj.containments.get(feature.name, ()):
                    back = child.references.get(back_name)
                    if back is not None and obj.object_id not in back:
                        back.append(obj.object_id)
            else:
                target_class = metamodel.class_named(feature.target_class_name)
                opp = (
                    metamodel.feature_named(target_class, back_name)
                    if target_class is not None
                    else None
                )
                if isinstance(opp, Reference) and opp.containment:
                    continue  # nesting already carries the link
                for target_id in obj.references.get(feature.name, ()):
                    target = id_map.get(target_id)
                    if target is None:
                        continue
                    back = target.references.get(back_name)
                    if back is not None and obj.object_id not in back:
                        back.append(obj.object_id)


def serialize_model(resource: ModelResource, metamodel: Metamodel) -> bytes:
    """Canonical model document.

    Exactly one side of each bidirectional pair is written: the side whose
    (declaring class name, feature name) is lexicographically smaller, and
    never a reference whose opposite is a containment, since nesting already
    encodes it.  Unset attributes and empty reference slots are omitted.
    """
    _check_tree(resource)
    paths = resource.paths()
    needs_xsi = _needs_xsi_type(resource, metamodel)

    def ref_text(obj: ModelObject, feature: Reference) -> str:
        parts = []
        for target_id in obj.references.get(feature.name, ()):
            path = paths.get(target_id)
            if path is None:
                raise DanglingPath(
                    f"{obj.class_name}.{feature.name} points at missing object "
                    f"{target_id}"
                )
            parts.append(str(path))
        return " ".join(parts)

    def render(obj: ModelObject, tag: str, extra: list[tuple[str, str]], indent: str) -> list[str]:
        meta_class = metamodel.require_class(obj.class_name)
        attrs = list(extra)
        features = metamodel.all_features(meta_class)
        for f in features:
            if isinstance(f, Attribute) and f.name in obj.attributes:
                attrs.append((f.name, render_value(f.data_type, obj.attributes[f.name])))
        for f in features:
            if (
                isinstance(f, Reference)
                and not f.containment
                and obj.references.get(f.name)
                and _emits_reference(metamodel, meta_class, f)
            ):
                attrs.append((f.name, ref_text(obj, f)))
        children: list[str] = []
        for f in features:
            if isinstance(f, Reference) and f.containment:
                for child in obj.containments.get(f.name, ()):
                    child_extra = []
                    if child.class_name != f.target_class_name:
                        child_extra.append(
                            ("xsi:type", f"{metamodel.ns_prefix}:{child.class_name}")
                        )
                    children.extend(render(child, f.name, child_extra, indent + "  "))
        return _render_element(tag, attrs, children, indent)

    root_tag = f"{metamodel.ns_prefix}:{resource.root.class_name}"
    root_extra = [(f"xmlns:{metamodel.ns_prefix}", metamodel.ns_uri)]
    if needs_xsi:
        root_extra.append(("xmlns:xsi", XSI_NS))
    lines = [_XML_DECLARATION]
    lines.extend(render(resource.root, root_tag, root_extra, ""))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _check_tree(resource: ModelResource) -> None:
    seen: set[int] = set()

    def walk(obj: ModelObject, path: FragmentPath):
        if id(obj) in seen:
            raise NotATree(f"object at {path} is contained more than once")
        seen.add(id(obj))
        for name, kids in obj.containments.items():
            for i, child in enumerate(kids):
                walk(child, path.child(name, i))

    walk(resource.root, FragmentPath())


def _needs_xsi_type(resource: ModelResource, metamodel: Metamodel) -> bool:
    for obj in resource.objects():
        meta_class = metamodel.class_named(obj.class_name)
        if meta_class is None:
            continue
        for f in metamodel.all_features(meta_class):
            if isinstance(f, Reference) and f.containment:
                for child in obj.containments.get(f.name, ()):
                    if child.class_name != f.target_class_name:
                        return True
    return False


def _emits_reference(metamodel: Metamodel, meta_class: MetaClass, ref: Reference) -> bool:
    """Pick the single serialized side of a bidirectional reference."""
    if ref.opposite_name is None:
        return True
    target = metamodel.class_named(ref.target_class_name)
    if target is None:
        return True
    opp = metamodel.feature_named(target, ref.opposite_name)
    if not isinstance(opp, Reference):
        return True
    if opp.containment:
        return False
    own = metamodel.declaring_class(meta_class, ref.name)
    other = metamodel.declaring_class(target, opp.name)
    own_name = own.name if own else meta_class.name
    other_name = other.name if other else target.name
    return (own_name, ref.name) <= (other_name, opp.name)
